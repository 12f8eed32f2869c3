"""Benchmark harness: crop, down-sample, reconstruct, score, tabulate.

Rows are produced in a fixed (image, factor, method) order whatever the
worker count, and the CSV carries no timings, so two runs with the same
config write byte-identical CSV files. Timings go to a separate file.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .bicubic import bicubic_upscale
from .image import crop_to_multiple, downsample, quantize, read_image
from .metrics import psnr, ssim
from .solver import SolverConfig, interpolate

log = logging.getLogger(__name__)

METHODS = ("bicubic", "nlr")
IMAGE_SUFFIXES = (".pgm", ".png")
CSV_FIELDS = ("image", "factor", "method", "psnr", "ssim", "status", "fingerprint")


@dataclass
class BenchmarkRecord:
    image: str
    factor: int
    method: str
    psnr: float = math.nan
    ssim: float = math.nan
    wall_time: float = 0.0
    fingerprint: str = ""
    status: str = "ok"
    error: str = ""
    report: object = None   # ConvergenceReport of nlr rows; never serialized

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def config_fingerprint(cfg: SolverConfig) -> str:
    """Short sha256 of every solver parameter (stable key order)."""
    blob = json.dumps(cfg.as_dict(), sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def list_images(dataset) -> list[Path]:
    paths = sorted(p for p in Path(dataset).iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    if not paths:
        raise FileNotFoundError(f"no .pgm/.png images in {dataset}")
    return paths


def reconstruct(y, factor: int, method: str, cfg: SolverConfig):
    """Returns ``(x, report)``; the report is ``None`` for the baseline."""
    if method == "bicubic":
        return bicubic_upscale(y, factor), None
    if method == "nlr":
        return interpolate(y, factor, cfg)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def run_one(path, factor: int, method: str, cfg: SolverConfig,
            fingerprint: str = "") -> BenchmarkRecord:
    """Score one (image, factor, method) cell; failures become FAILED rows."""
    path = Path(path)
    rec = BenchmarkRecord(path.stem, factor, method, fingerprint=fingerprint)
    t0 = time.perf_counter()
    try:
        truth = crop_to_multiple(read_image(path), factor)
        y = downsample(truth, factor)
        x, rec.report = reconstruct(y, factor, method, cfg)
        out = quantize(x)
        rec.psnr = psnr(truth, out)
        rec.ssim = ssim(truth, out)
    except Exception as exc:  # recorded in the table, never fatal for the run
        log.warning("%s x%d %s failed: %s", path.name, factor, method, exc)
        rec.status, rec.error = "FAILED", f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - t0
    return rec


def _run_task(task):
    return run_one(*task)


def run_benchmark(dataset, factors=(2,), methods=METHODS, cfg: SolverConfig | None = None,
                  workers: int = 1) -> list[BenchmarkRecord]:
    cfg = cfg or SolverConfig()
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    fp = config_fingerprint(cfg)
    tasks = [(path, f, m, cfg, fp) for path in list_images(dataset)
             for f in factors for m in methods]
    if workers <= 1 or len(tasks) == 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps submission order, so output order is worker-independent
        return list(pool.map(_run_task, tasks))


def averages(records) -> list[BenchmarkRecord]:
    """One ``Average`` row per (factor, method) over the successful rows."""
    out = []
    keys = sorted({(r.factor, r.method) for r in records},
                  key=lambda k: (k[0], METHODS.index(k[1]) if k[1] in METHODS else 99))
    for factor, method in keys:
        rows = [r for r in records if (r.factor, r.method) == (factor, method) and r.ok]
        if not rows:
            continue
        out.append(BenchmarkRecord(
            "Average", factor, method,
            psnr=math.fsum(r.psnr for r in rows) / len(rows),
            ssim=math.fsum(r.ssim for r in rows) / len(rows),
            wall_time=math.fsum(r.wall_time for r in rows),
            fingerprint=rows[0].fingerprint,
        ))
    return out


def to_csv(records) -> str:
    """Data rows then average rows; floats written with full precision."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in list(records) + averages(records):
        w.writerow([r.image, r.factor, r.method,
                    repr(r.psnr) if r.ok else "", repr(r.ssim) if r.ok else "",
                    r.status, r.fingerprint])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        row["factor"] = int(row["factor"])
        for key in ("psnr", "ssim"):
            row[key] = float(row[key]) if row[key] else math.nan
    return rows


def format_table(records) -> str:
    """Aligned plain-text table, one block per factor, PSNR (dB) / SSIM cells."""
    lines = []
    factors = sorted({r.factor for r in records})
    methods = [m for m in METHODS if any(r.method == m for r in records)]
    for factor in factors:
        rows = [r for r in records if r.factor == factor]
        names = list(dict.fromkeys(r.image for r in rows))
        cells = {(r.image, r.method): r for r in rows + averages(rows)}
        width = max(len(n) for n in names + ["Average", "image"])
        lines.append(f"x{factor}")
        lines.append(f"{'image':<{width}}" + "".join(f"  {m:>18}" for m in methods))
        for name in names + ["Average"]:
            text = []
            for m in methods:
                r = cells.get((name, m))
                if r is None:
                    text.append(f"  {'-':>18}")
                elif not r.ok:
                    text.append(f"  {'FAILED':>18}")
                else:
                    text.append(f"  {r.psnr:>9.4f} / {r.ssim:.4f}")
            lines.append(f"{name:<{width}}" + "".join(text))
        lines.append("")
    return "\n".join(lines)


def timing_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("image", "factor", "method", "wall_time"))
    for r in records:
        w.writerow([r.image, r.factor, r.method, f"{r.wall_time:.3f}"])
    return buf.getvalue()


def write_outputs(records, table_path, csv_path=None, timing_path=None):
    """Write table, CSV (default: table path with ``.csv``) and timings."""
    table_path = Path(table_path)
    csv_path = Path(csv_path) if csv_path else table_path.with_suffix(".csv")
    timing_path = Path(timing_path) if timing_path else \
        table_path.with_name(table_path.stem + ".timing.csv")
    table_path.write_text(format_table(records))
    csv_path.write_text(to_csv(records))
    timing_path.write_text(timing_csv(records))
    return table_path, csv_path, timing_path
