"""Benchmark helper: grow a prepared table by whole-table concatenation.

Rows are repeated `factor` times in order (copy 0 first, then copy 1, ...).
For factor >= 2 every sample id gains a ``#<copy>`` suffix to stay unique;
factor 1 leaves the table untouched.
"""

from __future__ import annotations

from ..errors import BuiltinError
from . import StageRequest, get, section
from .tables import Table, read_table, write_table


def concat_scale(table: Table, factor: int) -> Table:
    if factor < 1:
        raise BuiltinError(f"scale: factor must be >= 1, got {factor}")
    if factor == 1:
        return table
    ids = []
    values = []
    targets = []
    for copy in range(factor):
        ids.extend(f"{sample_id}#{copy}" for sample_id in table.ids)
        values.extend(list(row) for row in table.values)
        targets.extend(table.targets)
    return Table(prefix=table.prefix, ids=ids, values=values, targets=targets)


def run(request: StageRequest) -> None:
    cfg = section(request, "scale")
    factor = get(cfg, "factor", "int", f"stage '{request.stage}'")
    table = read_table(request.dep(0, "prepared CSV"))
    write_table(concat_scale(table, factor), request.out(0, "scaled CSV"))
