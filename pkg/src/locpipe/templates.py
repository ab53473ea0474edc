"""Preconfigured experiment templates.

`init` scaffolds an experiment directory from one of these. Each template is
exactly two files, ``pipeline.yaml`` and ``params.yaml``; the change-study
templates (``change-*``) differ from ``baseline`` only in those files, so
every incremental experiment change is a config-only diff.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

_BASELINE_PIPELINE = """\
version: 1
stages:
  synth:
    builtin: loc.synth
    params: [synth]
    outs: [data/raw.csv]
  prepare:
    builtin: loc.prepare
    deps: [data/raw.csv]
    params: [prepare]
    outs: [data/prepared.csv, data/prepare_summary.json]
    metrics: [data/prepare_summary.json]
  featurize:
    builtin: loc.featurize
    deps: [data/prepared.csv]
    params: [featurize]
    outs: [data/features.csv]
  split:
    builtin: loc.split
    deps: [data/prepared.csv]
    params: [split]
    outs: [data/folds.json]
  gridsearch:
    builtin: loc.gridsearch
    deps: [data/features.csv, data/folds.json]
    params: [model]
    outs: [out/cv_results.json, out/model.json, out/predictions.csv, out/metrics.json]
    metrics: [out/metrics.json]
  report:
    builtin: loc.report
    deps: [out/cv_results.json, out/metrics.json]
    outs: [report/report.md, report/summary.csv]
"""

_BASELINE_PARAMS = """\
synth:
  n: 300
  anchors: 6
  area:
    w: 60.0
    h: 40.0
  p0: -40.0
  path_loss_n: 2.2
  sigma: 2.0
  seed: 1234
prepare:
  fill_value: -100.0
  drop_policy: targets
featurize:
  transforms: [identity]
split:
  strategy: kfold
  k: 5
  seed: 7
model:
  primary_metric: rmse
  report_metrics: [rmse, loc_err_mean]
  grid:
    ridge:
      alpha: [0.0]
      fit_intercept: [true, false]
"""

_TWO_MODEL_PARAMS = _BASELINE_PARAMS.replace(
    """\
  grid:
    ridge:
      alpha: [0.0]
      fit_intercept: [true, false]
""",
    """\
  grid:
    ridge:
      alpha: [0.0]
      fit_intercept: [true, false]
    knn:
      k: [3, 5]
      weights: [uniform, distance]
      metric: [euclidean]
""",
)

_SCALING_PIPELINE = """\
version: 1
stages:
  synth:
    builtin: loc.synth
    params: [synth]
    outs: [data/raw.csv]
  prepare:
    builtin: loc.prepare
    deps: [data/raw.csv]
    params: [prepare]
    outs: [data/prepared.csv, data/prepare_summary.json]
    metrics: [data/prepare_summary.json]
  scale:
    builtin: loc.scale
    deps: [data/prepared.csv]
    params: [scale]
    outs: [data/scaled.csv]
  featurize:
    builtin: loc.featurize
    deps: [data/scaled.csv]
    params: [featurize]
    outs: [data/features.csv]
  split:
    builtin: loc.split
    deps: [data/scaled.csv]
    params: [split]
    outs: [data/folds.json]
  gridsearch:
    builtin: loc.gridsearch
    deps: [data/features.csv, data/folds.json]
    params: [model]
    outs: [out/cv_results.json, out/model.json, out/predictions.csv, out/metrics.json]
    metrics: [out/metrics.json]
  report:
    builtin: loc.report
    deps: [out/cv_results.json, out/metrics.json]
    outs: [report/report.md, report/summary.csv]
"""

_SCALING_PARAMS = """\
synth:
  n: 600
  anchors: 6
  area:
    w: 60.0
    h: 40.0
  p0: -40.0
  path_loss_n: 2.2
  sigma: 2.0
  seed: 1234
prepare:
  fill_value: -100.0
  drop_policy: targets
scale:
  factor: 1
featurize:
  transforms: [identity]
split:
  strategy: kfold
  k: 5
  seed: 7
model:
  primary_metric: rmse
  report_metrics: [rmse, loc_err_mean]
  grid:
    ridge:
      alpha: [0.0, 0.5]
      fit_intercept: [true, false]
"""

# Change study: replace the estimator values and add a second estimator.
_CHANGE_ESTIMATOR_PARAMS = _BASELINE_PARAMS.replace(
    """\
  grid:
    ridge:
      alpha: [0.0]
      fit_intercept: [true, false]
""",
    """\
  grid:
    ridge:
      alpha: [0.1, 1.0]
      fit_intercept: [true, false]
    knn:
      k: [5]
      weights: [distance]
      metric: [manhattan]
""",
)

# Change study: switch to a different dataset source (config-only).
_CHANGE_DATASET_PARAMS = _BASELINE_PARAMS.replace(
    """\
synth:
  n: 300
  anchors: 6
  area:
    w: 60.0
    h: 40.0
  p0: -40.0
  path_loss_n: 2.2
  sigma: 2.0
  seed: 1234
""",
    """\
synth:
  n: 400
  anchors: 8
  area:
    w: 80.0
    h: 50.0
  p0: -42.0
  path_loss_n: 2.5
  sigma: 3.0
  seed: 777
""",
)

# Change study: different cross-validation strategy plus an extra metric.
_CHANGE_CV_PARAMS = _BASELINE_PARAMS.replace(
    """\
split:
  strategy: kfold
  k: 5
  seed: 7
""",
    """\
split:
  strategy: shuffle
  test_fraction: 0.2
  repeats: 5
  seed: 7
""",
).replace(
    "  report_metrics: [rmse, loc_err_mean]\n",
    "  report_metrics: [rmse, loc_err_mean, loc_err_p95]\n",
)

# Change study: append a user-supplied external-command stage.
_CHANGE_EXTERNAL_PIPELINE = _BASELINE_PIPELINE + """\
  export:
    cmd: cp out/cv_results.json out/export.json
    deps: [out/cv_results.json]
    outs: [out/export.json]
"""

TEMPLATES: dict[str, dict[str, str]] = {
    "baseline": {
        "pipeline.yaml": _BASELINE_PIPELINE,
        "params.yaml": _BASELINE_PARAMS,
    },
    "two-model": {
        "pipeline.yaml": _BASELINE_PIPELINE,
        "params.yaml": _TWO_MODEL_PARAMS,
    },
    "scaling": {
        "pipeline.yaml": _SCALING_PIPELINE,
        "params.yaml": _SCALING_PARAMS,
    },
    "change-estimator": {
        "pipeline.yaml": _BASELINE_PIPELINE,
        "params.yaml": _CHANGE_ESTIMATOR_PARAMS,
    },
    "change-dataset": {
        "pipeline.yaml": _BASELINE_PIPELINE,
        "params.yaml": _CHANGE_DATASET_PARAMS,
    },
    "change-cv": {
        "pipeline.yaml": _BASELINE_PIPELINE,
        "params.yaml": _CHANGE_CV_PARAMS,
    },
    "change-external": {
        "pipeline.yaml": _CHANGE_EXTERNAL_PIPELINE,
        "params.yaml": _BASELINE_PARAMS,
    },
}


def template_names() -> list[str]:
    return sorted(TEMPLATES)


def init_experiment(directory: Path | str, template: str = "baseline") -> Path:
    """Scaffold `template` into `directory`; refuses to overwrite an existing project."""
    if template not in TEMPLATES:
        raise ConfigError(
            f"unknown template '{template}' (available: {', '.join(template_names())})"
        )
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if (directory / "pipeline.yaml").exists():
        raise ConfigError(f"{directory} already contains a pipeline.yaml")
    for filename, text in TEMPLATES[template].items():
        (directory / filename).write_text(text, encoding="utf-8")
    return directory
