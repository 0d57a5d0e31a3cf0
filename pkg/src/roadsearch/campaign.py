"""Campaign orchestration: repetitions, crash-safe persistence, reports.

A campaign runs one engine ``repetitions`` times with derived per-repetition
seeds, streams every outcome to disk as it happens (a killed campaign
leaves a readable JSONL prefix), and writes an aggregate CSV with one
metrics row per run plus box-plot SVGs and a distribution summary.
"""

import json
import statistics
from pathlib import Path

from .config import Budget, CampaignConfig, CampaignResult, campaign_result_from_json
from .engines import SeedPool, bootstrap_seed_pool, run_engine
from .errors import ConfigurationError
from .executor import resolve_executor
from .geometry import road_to_json
from .metrics import MetricsReport
from .scenario import outcome_to_json

AGGREGATE_CSV = "campaign_metrics.csv"
SUMMARY_CSV = "summary.csv"
SUMMARY_FIELDS = ("detected_failures", "sparseness", "effectiveness", "effectiveness_plus")


class _JsonlRecorder:
    """Appends one {road, outcome} JSON line per generated scenario."""

    def __init__(self, path: Path, spec):
        self.path = path
        self.spec = spec
        self._fh = open(path, "w")

    def __call__(self, road, outcome) -> None:
        line = json.dumps(
            {"road": road_to_json(road, self.spec), "outcome": outcome_to_json(outcome)}
        )
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def load_seed_pool(config: CampaignConfig, executor) -> SeedPool | None:
    """Seed pool for a campaign: loaded from disk or bootstrapped."""
    if config.engine_config.engine == "random":
        return None
    if config.seed_pool_path is not None and Path(config.seed_pool_path).exists():
        return SeedPool.load(config.seed_pool_path)
    return bootstrap_seed_pool(
        config, executor, config.bootstrap_executions, out_path=config.seed_pool_path
    )


def run_campaign(config: CampaignConfig) -> list[CampaignResult]:
    """Run the configured engine for every repetition and persist everything."""
    executor = resolve_executor(config.executor)

    out_dir = None
    if config.output_dir is not None:
        out_dir = Path(config.output_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            probe = out_dir / ".write_probe"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigurationError(f"output dir {out_dir} is not writable: {exc}") from exc

    seed_pool = load_seed_pool(config, executor)

    base_seed = config.engine_config.rng_seed
    results: list[CampaignResult] = []
    for rep in range(config.repetitions):
        rep_config = config.with_seed(base_seed + rep)
        budget = Budget.from_config(rep_config)
        recorder = None
        if out_dir is not None:
            recorder = _JsonlRecorder(out_dir / f"outcomes_rep{rep:02d}.jsonl", config.road_spec)
        try:
            result = run_engine(rep_config, executor, budget, seed_pool, recorder=recorder)
        finally:
            if recorder is not None:
                recorder.close()
        results.append(result)
        if out_dir is not None:
            (out_dir / f"result_rep{rep:02d}.json").write_text(
                json.dumps(result.to_json(), indent=1)
            )

    if out_dir is not None:
        (out_dir / AGGREGATE_CSV).write_text(aggregate_csv(results))
    return results


def aggregate_csv(results: list[CampaignResult]) -> str:
    """One metrics row per run; deterministic byte-for-byte for fixed runs."""
    header = ["run", "engine", *MetricsReport.CSV_FIELDS]
    lines = [",".join(header)]
    for i, result in enumerate(results):
        row = [str(i), result.config.engine_config.engine, *result.metrics.csv_row()]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def summarize(results: list[CampaignResult]) -> dict[str, dict[str, float]]:
    """Cross-run distribution summary of the headline metrics."""
    summary: dict[str, dict[str, float]] = {}
    for name in SUMMARY_FIELDS:
        values = [float(getattr(r.metrics, name)) for r in results]
        summary[name] = {
            "min": min(values),
            "median": statistics.median(values),
            "max": max(values),
            "mean": statistics.fmean(values),
            "stddev": statistics.pstdev(values),
        }
    return summary


def emit_report(results: list[CampaignResult], out_dir) -> list[Path]:
    """Write per-run CSV, distribution summary, and one box plot per metric."""
    if not results:
        raise ValueError("cannot report on zero results")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out_dir / AGGREGATE_CSV
    csv_path.write_text(aggregate_csv(results))
    written.append(csv_path)

    summary = summarize(results)
    lines = ["metric,min,median,max,mean,stddev"]
    for name, stats in summary.items():
        lines.append(
            f"{name},{stats['min']!r},{stats['median']!r},{stats['max']!r},"
            f"{stats['mean']!r},{stats['stddev']!r}"
        )
    summary_path = out_dir / SUMMARY_CSV
    summary_path.write_text("\n".join(lines) + "\n")
    written.append(summary_path)

    for name in SUMMARY_FIELDS:
        values = [float(getattr(r.metrics, name)) for r in results]
        plot_path = out_dir / f"box_{name}.svg"
        plot_path.write_text(boxplot_svg(values, title=name))
        written.append(plot_path)
    return written


def boxplot_svg(values: list[float], title: str = "", width: int = 360, height: int = 260) -> str:
    """Standalone SVG box plot; every input value appears exactly once as a
    ``<circle class="datapoint" data-value=...>`` element."""
    if not values:
        raise ValueError("no values to plot")
    lo, hi = min(values), max(values)
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    pad_lo, pad_hi = lo - 0.1 * span, hi + 0.1 * span

    top, bottom = 30, height - 30
    def ty(v: float) -> float:
        return bottom - (v - pad_lo) / (pad_hi - pad_lo) * (bottom - top)

    svalues = sorted(values)
    def quantile(q: float) -> float:
        idx = q * (len(svalues) - 1)
        i = int(idx)
        frac = idx - i
        return svalues[i] if i + 1 >= len(svalues) else svalues[i] * (1 - frac) + svalues[i + 1] * frac

    q1, med, q3 = quantile(0.25), quantile(0.5), quantile(0.75)
    cx, box_w = width * 0.45, 70

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{title}</title>',
        f'<text x="{width/2:.1f}" y="18" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{cx:.1f}" y1="{ty(lo):.2f}" x2="{cx:.1f}" y2="{ty(hi):.2f}" '
        f'stroke="#444" stroke-width="1"/>',
        f'<line x1="{cx-18:.1f}" y1="{ty(lo):.2f}" x2="{cx+18:.1f}" y2="{ty(lo):.2f}" '
        f'stroke="#444" stroke-width="1"/>',
        f'<line x1="{cx-18:.1f}" y1="{ty(hi):.2f}" x2="{cx+18:.1f}" y2="{ty(hi):.2f}" '
        f'stroke="#444" stroke-width="1"/>',
        f'<rect x="{cx-box_w/2:.1f}" y="{ty(q3):.2f}" width="{box_w}" '
        f'height="{max(ty(q1)-ty(q3), 0.5):.2f}" fill="#9ecae1" stroke="#333"/>',
        f'<line x1="{cx-box_w/2:.1f}" y1="{ty(med):.2f}" x2="{cx+box_w/2:.1f}" '
        f'y2="{ty(med):.2f}" stroke="#333" stroke-width="2"/>',
    ]
    for i, v in enumerate(values):
        jitter = cx + box_w * 0.75 + (i % 5) * 6
        parts.append(
            f'<circle class="datapoint" data-value="{v!r}" cx="{jitter:.1f}" '
            f'cy="{ty(v):.2f}" r="3" fill="#e6550d" fill-opacity="0.7"/>'
        )
    for v, label in ((lo, f"{lo:g}"), (hi, f"{hi:g}")):
        parts.append(
            f'<text x="{cx-box_w/2-8:.1f}" y="{ty(v)+4:.2f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def load_results(out_dir) -> list[CampaignResult]:
    """Read persisted per-repetition result files from a campaign dir."""
    out_dir = Path(out_dir)
    paths = sorted(out_dir.glob("result_rep*.json"))
    if not paths:
        raise ConfigurationError(f"no result_rep*.json files under {out_dir}")
    return [campaign_result_from_json(json.loads(p.read_text())) for p in paths]
