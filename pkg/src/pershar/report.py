"""Summary table of a results CSV: PDL - PML pairs and a DL cell per split block."""

from __future__ import annotations

import csv
import io

from .experiments import RunResult, macro_accuracy, read_results

MISSING = "\u2014"  # em dash marks a cell with no results
ROW_ORDER = [
    ("SI", "physical"), ("SI", "sensor"), ("SI", "physical_sensor"),
    ("HYB", "physical"), ("HYB", "sensor"), ("HYB", "physical_sensor"),
]
DISPLAY_NAMES = {"unimib": "UniMiB-SHAR", "motionsense": "Motion Sense"}
DEFAULT_DATASETS = ("unimib", "motionsense")


def row_label(split: str, kind: str) -> str:
    return f"{split}-{kind.replace('_', ' ')}"


def _datasets(results: list[RunResult]) -> list[str]:
    present = {r.dataset for r in results}
    if not present:
        return list(DEFAULT_DATASETS)
    known = [d for d in DEFAULT_DATASETS if d in present]
    return known + sorted(present - set(known))


def _cells(results: list[RunResult]) -> dict:
    cells = {}
    for method in ("PDL", "PML"):
        subset = [r for r in results if r.method == method]
        if subset:
            for row in macro_accuracy(subset, ["dataset", "split", "sim_kind"]):
                cells[method, row["dataset"], row["split"], row["sim_kind"]] = row["accuracy"]
    dl = [r for r in results if r.method == "DL"]
    if dl:
        for row in macro_accuracy(dl, ["dataset", "split"]):
            cells["DL", row["dataset"], row["split"], None] = row["accuracy"]
    return cells


def _pct(value) -> str:
    return MISSING if value is None else f"{100 * value:.2f}"


def table_rows(results: list[RunResult]) -> tuple[list[str], list[list]]:
    """Dataset order and, per Table row, ``[label, (pdl, pml, dl) per dataset...]``."""
    datasets = _datasets(results)
    cells = _cells(results)
    rows = []
    for split, kind in ROW_ORDER:
        row = [row_label(split, kind)]
        for ds in datasets:
            row.append((cells.get(("PDL", ds, split, kind)),
                        cells.get(("PML", ds, split, kind)),
                        cells.get(("DL", ds, split, None))))
        rows.append(row)
    return datasets, rows


def render_text(results: list[RunResult]) -> str:
    datasets, rows = table_rows(results)
    label_w = max(len(r[0]) for r in rows)
    pair_w = len("100.00 - 100.00")
    dl_w = 6
    block_w = pair_w + 3 + dl_w

    lines = [" " * label_w + "".join(f" | {DISPLAY_NAMES.get(d, d):<{block_w}}" for d in datasets)]
    lines.append(" " * label_w + "".join(f" | {'PDL - PML':<{pair_w}} | {'DL':<{dl_w}}" for _ in datasets))
    lines.append("-" * len(lines[1]))
    for i, row in enumerate(rows):
        first_in_block = i % 3 == 0
        parts = [f"{row[0]:<{label_w}}"]
        for pdl, pml, dl in row[1:]:
            pair = f"{_pct(pdl)} - {_pct(pml)}"
            dl_cell = _pct(dl) if first_in_block else ""
            parts.append(f" | {pair:<{pair_w}} | {dl_cell:<{dl_w}}")
        lines.append("".join(parts).rstrip())
        if i == 2:
            lines.append("-" * len(lines[1]))
    return "\n".join(lines) + "\n"


def render_csv(results: list[RunResult]) -> str:
    datasets, rows = table_rows(results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["row"]
    for d in datasets:
        header += [f"{d}:PDL", f"{d}:PML", f"{d}:DL"]
    w.writerow(header)
    for row in rows:
        out = [row[0]]
        for cell in row[1:]:
            out += ["" if v is None else f"{100 * v:.2f}" for v in cell]
        w.writerow(out)
    return buf.getvalue()


def report_table(results_csv) -> tuple[str, str]:
    """Render a results CSV as (UTF-8 text table, machine-readable CSV)."""
    results = read_results(results_csv)
    return render_text(results), render_csv(results)
