"""Command-line tool: render scenes, estimate poses, run sweeps, export layouts.

Usage::

    phasemark render   --config job.json --output scene.png
    phasemark estimate scene.png --config job.json
    phasemark bench    --config job.json --output sweep.csv
    phasemark layout   --config job.json --output marker.svg

Exit codes: 0 success, 2 configuration error, 3 detection failure, 4 decode
failure, 5 I/O error. Every emitted record carries ``schema_version``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, get_args, get_origin, get_type_hints

import numpy as np

from . import guidelines
from .estimators import MegarenaPoseEstimator, SmallMarkerPoseEstimator
from .exceptions import ConfigError, ImageIOError, PhasemarkError
from .imagecore import SensorSpec, degrade, load_image, save_image
from .patterngen import (
    GuidelineWarning,
    HpCodeSpec,
    MegarenaSpec,
    RenderPose,
    StampSpec,
    export_svg,
    layout_hpcode,
    layout_megarena,
    layout_stamp,
    layout_to_image,
    render,
    view_pose,
)
from .pose import relative_pose, signed_angle

SCHEMA_VERSION = "1.0"
KINDS = ("megarena", "hpcode", "stamp")
FORMATS = ("json", "csv")

BENCH_COLUMNS = (
    "schema_version",
    "kind",
    "periods",
    "noise",
    "blur",
    "repetitions",
    "successes",
    "success_rate",
    "std_x_px",
    "std_y_px",
    "std_xy_px",
    "std_x_periods",
    "std_y_periods",
    "std_theta_mrad",
    "mean_x_px",
    "mean_y_px",
    "mean_latency_ms",
)


# -- configuration -----------------------------------------------------------


@dataclass
class MarkerConfig:
    n: int = 8
    extent_codes: Optional[int] = None
    periods_across: int = 20
    border_thickness: int = 1
    marker_id: int = 0
    period: float = 1.0
    unit: str = "period"
    dot_diameter_ratio: float = 0.5


@dataclass
class PoseConfig:
    """Megarena: pattern position (periods) seen at the image center.
    Small markers: marker center relative to the image center (periods)."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    marker_id: Optional[int] = None


@dataclass
class SceneConfig:
    pixels_per_period: float = 10.0
    width: int = 512
    height: int = 512
    supersample: int = 4
    poses: list = field(default_factory=lambda: [PoseConfig()])
    noise_sigma: float = 0.0
    blur_sigma: float = 0.0
    bit_depth: int = 8


@dataclass
class AnalysisConfig:
    apodize: Optional[bool] = None  # None: on for small markers, off for Megarena
    sigma_f: Optional[float] = None
    cyclic: bool = False
    enforce_minimum: bool = True
    exclusion: int = 2


@dataclass
class GuidelineConfig:
    pixel_size: bool = True
    small_marker_periods: bool = True
    megarena_periods: bool = True


@dataclass
class BenchConfig:
    periods: list = field(default_factory=lambda: [9, 13, 17, 25])
    noise: list = field(default_factory=lambda: [0.0])
    blur: list = field(default_factory=lambda: [0.0])
    repetitions: int = 20
    theta_range: float = 0.3


@dataclass
class IOConfig:
    image: Optional[str] = None
    output: Optional[str] = None


@dataclass
class JobConfig:
    kind: str = "megarena"
    marker: MarkerConfig = field(default_factory=MarkerConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    guidelines: GuidelineConfig = field(default_factory=GuidelineConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    io: IOConfig = field(default_factory=IOConfig)
    format: Optional[str] = None  # None: csv for bench, json otherwise
    seed: int = 0
    threads: int = 1

    @property
    def apodize(self) -> bool:
        if self.analysis.apodize is None:
            return self.kind != "megarena"
        return bool(self.analysis.apodize)

    def validate(self) -> "JobConfig":
        def need(cond, where, msg):
            if not cond:
                raise ConfigError(f"{where}: {msg}")

        need(self.kind in KINDS, "kind", f"must be one of {KINDS}, got {self.kind!r}")
        need(self.format is None or self.format in FORMATS, "format", f"must be one of {FORMATS}, got {self.format!r}")
        need(self.threads >= 1, "threads", "must be >= 1")
        m, s, b = self.marker, self.scene, self.bench
        need(m.period > 0, "marker.period", "must be > 0")
        need(0 < m.dot_diameter_ratio < 1, "marker.dot_diameter_ratio", "must be in (0, 1)")
        need(m.marker_id >= 0, "marker.marker_id", "must be >= 0")
        need(s.pixels_per_period > 0, "scene.pixels_per_period", "must be > 0")
        need(s.width >= 32 and s.height >= 32, "scene.width/height", "must be >= 32")
        need(s.supersample >= 1, "scene.supersample", "must be >= 1")
        need(s.noise_sigma >= 0 and s.blur_sigma >= 0, "scene.noise_sigma/blur_sigma", "must be >= 0")
        need(s.bit_depth in (8, 16), "scene.bit_depth", "must be 8 or 16")
        need(len(s.poses) >= 1, "scene.poses", "needs at least one pose")
        need(self.kind != "megarena" or len(s.poses) == 1, "scene.poses", "a Megarena scene has exactly one pose")
        need(b.repetitions >= 0, "bench.repetitions", "must be >= 0")
        need(all(p >= 9 for p in b.periods), "bench.periods", "all entries must be >= 9")
        need(all(v >= 0 for v in b.noise + b.blur), "bench.noise/blur", "entries must be >= 0")
        need(self.analysis.exclusion >= 0, "analysis.exclusion", "must be >= 0")
        try:
            self.marker_spec()
        except PhasemarkError as exc:
            raise ConfigError(f"marker: {exc}") from exc
        except KeyError:
            raise ConfigError(f"marker.n: unsupported code depth {m.n}") from None
        return self

    def marker_spec(self, periods_across: Optional[int] = None, marker_id: Optional[int] = None):
        m = self.marker
        n_across = m.periods_across if periods_across is None else periods_across
        mid = m.marker_id if marker_id is None else marker_id
        if self.kind == "megarena":
            return MegarenaSpec(
                n=m.n, extent_codes=m.extent_codes, period=m.period, dot_diameter_ratio=m.dot_diameter_ratio
            )
        if self.kind == "hpcode":
            return HpCodeSpec(n_across, marker_id=mid, period=m.period, dot_diameter_ratio=m.dot_diameter_ratio)
        return StampSpec(
            n_across, border_thickness=m.border_thickness, marker_id=mid, period=m.period,
            dot_diameter_ratio=m.dot_diameter_ratio,
        )


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce(value, tp, where):
    origin = get_origin(tp)
    if origin is not None and type(None) in get_args(tp):  # Optional[X]
        if value is None:
            return None
        inner = [a for a in get_args(tp) if a is not type(None)][0]
        return _coerce(value, inner, where)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{where}: expected a finite number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {_type_name(tp)}")


# element types of list fields
_LIST_ITEMS = {
    ("SceneConfig", "poses"): PoseConfig,
    ("BenchConfig", "periods"): int,
    ("BenchConfig", "noise"): float,
    ("BenchConfig", "blur"): float,
}


def _from_dict(cls, data, where: str = ""):
    """Strictly build dataclass ``cls`` from JSON data; unknown keys fail."""
    label = where or "config"
    if not isinstance(data, dict):
        raise ConfigError(f"{label}: expected an object, got {type(data).__name__}")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        paths = ", ".join(f"{where}.{k}" if where else k for k in unknown)
        raise ConfigError(f"unknown field(s) {paths} (allowed in {label}: {', '.join(sorted(names))})")
    kwargs = {}
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        item = _LIST_ITEMS.get((cls.__name__, name))
        if item is not None:
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list, got {value!r}")
            kwargs[name] = [_coerce(v, item, f"{path}[{k}]") for k, v in enumerate(value)]
        else:
            kwargs[name] = _coerce(value, hints[name], path)
    return cls(**kwargs)


def parse_config(text: str, source: str = "<config>") -> JobConfig:
    """Parse and validate a JSON job configuration.

    Raises
    ------
    ConfigError
        With the line and column of a syntax error, or the dotted path of
        the offending field.
    """
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return _from_dict(JobConfig, data).validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: Optional[str]) -> JobConfig:
    if path is None:
        return JobConfig().validate()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot read config ({exc.strerror or exc})") from exc
    return parse_config(text, str(path))


# -- output helpers ------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dumps(record) -> str:
    return json.dumps(_jsonable(record), indent=2, sort_keys=False) + "\n"


def _flatten(record: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in record.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(_jsonable(v))
        else:
            out[key] = _jsonable(v)
    return out


def _csv_text(rows: list, columns=None) -> str:
    buf = io.StringIO()
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()


def _emit(text: str, output: Optional[str]) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    try:
        Path(output).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"{output}: cannot write ({exc.strerror or exc})") from exc


def guideline_report(config: JobConfig, pixels_per_period: Optional[float] = None, visible_periods=None):
    enabled = [name for name in guidelines.CHECKS if getattr(config.guidelines, name)]
    s = config.scene
    ppp = s.pixels_per_period if pixels_per_period is None else pixels_per_period
    if visible_periods is None and config.kind == "megarena":
        visible_periods = min(s.width, s.height) / ppp
    return guidelines.evaluate(
        config.kind,
        pixels_per_period=ppp,
        periods_across=config.marker.periods_across if config.kind != "megarena" else None,
        n=config.marker.n if config.kind == "megarena" else None,
        visible_periods=visible_periods,
        enabled=enabled,
    )


def _warn(report: guidelines.GuidelineReport, quiet: bool) -> None:
    if quiet:
        return
    for c in report.checks:
        if c.status != guidelines.PASS:
            print(f"{c.status.upper()}: {c.name}: {c.message}", file=sys.stderr)


def _layout(config: JobConfig, periods_across: Optional[int] = None, marker_id: Optional[int] = None):
    spec = config.marker_spec(periods_across, marker_id)
    if config.kind == "megarena":
        return layout_megarena(spec)
    if config.kind == "hpcode":
        return layout_hpcode(spec)
    return layout_stamp(spec)


def _render_pose(config: JobConfig, pose: PoseConfig, ppp: float, layout) -> RenderPose:
    if config.kind == "megarena":
        return view_pose(pose.x, pose.y, pose.theta, ppp, origin=layout.origin)
    return RenderPose(pose.x, pose.y, pose.theta, ppp)


def render_scene(config: JobConfig, seed: Optional[int] = None) -> np.ndarray:
    """Render every configured pose into one frame, then degrade it."""
    s = config.scene
    seed = config.seed if seed is None else seed
    layouts = {}
    frame = np.zeros((s.height, s.width))
    for pose in s.poses:
        mid = config.marker.marker_id if pose.marker_id is None else pose.marker_id
        if mid not in layouts:
            layouts[mid] = _layout(config, marker_id=mid)
        layout = layouts[mid]
        img = render(layout, _render_pose(config, pose, s.pixels_per_period, layout), (s.width, s.height), s.supersample)
        np.maximum(frame, img, out=frame)
    if s.noise_sigma > 0 or s.blur_sigma > 0:
        sensor = SensorSpec(bit_depth=16, gaussian_noise_sigma=s.noise_sigma, blur_sigma=s.blur_sigma)
        frame = degrade(frame, sensor, seed=seed)
    return frame


def sidecar_path(image_path) -> Path:
    p = Path(image_path)
    return p.with_name(p.stem + ".truth.json")


# -- commands ------------------------------------------------------------------


def cmd_render(config: JobConfig, output: Optional[str] = None, quiet: bool = False) -> dict:
    """Render the configured scene and write it with a ground-truth sidecar."""
    output = output or config.io.output
    if not output:
        raise ConfigError("render needs an output path (--output or io.output)")
    report = guideline_report(config)
    _warn(report, quiet)
    img = render_scene(config)
    save_image(img, output, bit_depth=config.scene.bit_depth)
    s = config.scene
    truth = {
        "schema_version": SCHEMA_VERSION,
        "kind": config.kind,
        "image": str(output),
        "marker": dataclasses.asdict(config.marker),
        "scene": {k: v for k, v in dataclasses.asdict(s).items() if k != "poses"},
        "poses": [dataclasses.asdict(p) for p in s.poses],
        "seed": config.seed,
        "guidelines": report.as_list(),
    }
    side = sidecar_path(output)
    try:
        side.write_text(_dumps(truth), encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"{side}: cannot write ({exc.strerror or exc})") from exc
    return {"schema_version": SCHEMA_VERSION, "command": "render", "status": "ok", "image": str(output), "sidecar": str(side)}


def _small_estimator(config: JobConfig, periods_across: Optional[int] = None) -> SmallMarkerPoseEstimator:
    return SmallMarkerPoseEstimator(
        kind=config.kind,
        periods_across=config.marker.periods_across if periods_across is None else periods_across,
        border_thickness=config.marker.border_thickness,
        period=config.marker.period,
        exclusion=config.analysis.exclusion,
        apodize=config.apodize,
        sigma_f=config.analysis.sigma_f,
    ).fit()


def _megarena_estimator(config: JobConfig) -> MegarenaPoseEstimator:
    return MegarenaPoseEstimator(
        n=config.marker.n,
        period=config.marker.period,
        cyclic=config.analysis.cyclic,
        enforce_minimum=config.analysis.enforce_minimum,
        apodize=config.apodize,
        sigma_f=config.analysis.sigma_f,
    ).fit()


def estimate_image(config: JobConfig, img: np.ndarray, estimator=None) -> dict:
    """Pose record for one image (no I/O)."""
    unit = config.marker.unit
    timings = {}
    t0 = time.perf_counter()
    poses = []
    relative = []
    if config.kind == "megarena":
        estimator = estimator or _megarena_estimator(config)
        pose, absolute, phase = estimator.estimate(img, timings)
        total = time.perf_counter() - t0
        rec = pose.as_dict()
        rec.update(
            unit=unit,
            x_periods=absolute.x,
            y_periods=absolute.y,
            code_x=absolute.code_x,
            code_y=absolute.code_y,
            quadrant=absolute.quadrant,
            confidence=absolute.confidence,
            period_px=phase.period_px,
        )
        poses.append(rec)
        visible = min(img.shape) / phase.period_px
        report = guideline_report(config, phase.period_px, visible)
    else:
        estimator = estimator or _small_estimator(config)
        found = estimator.estimate(img, timings)
        total = time.perf_counter() - t0
        for pose, est in found:
            rec = pose.as_dict()
            rec.update(
                unit=unit,
                marker_id=est.marker_id,
                center_px=list(est.center_px),
                quadrant=est.quadrant,
                confidence=est.confidence,
                period_px=est.period_px,
            )
            poses.append(rec)
        base = found[0][0]
        for pose, est in found[1:]:
            rel = relative_pose(base, pose)
            rec = rel.as_dict(signed=True)
            rec.update(unit=unit, reference_id=found[0][1].marker_id, marker_id=est.marker_id)
            relative.append(rec)
        report = guideline_report(config, found[0][1].period_px)
    timings_ms = {k: 1e3 * v for k, v in sorted(timings.items())}
    timings_ms["total"] = 1e3 * total
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "status": "ok",
        "kind": config.kind,
        "poses": poses,
        "relative": relative,
        "timings_ms": timings_ms,
        "guidelines": report.as_list(),
    }


def cmd_estimate(config: JobConfig, image_path: Optional[str] = None) -> dict:
    path = image_path or config.io.image
    if not path:
        raise ConfigError("estimate needs an image path (argument or io.image)")
    img = load_image(path)
    record = estimate_image(config, img)
    record["image"] = str(path)
    return record


def _bench_frame(kind: str, periods: int, ppp: float) -> int:
    if kind == "megarena":
        return int(math.ceil((periods + 2) * ppp))
    # room for the marker at any in-plane angle up to ~0.3 rad plus a quiet zone
    return int(math.ceil((1.25 * periods + 4) * ppp))


def _bench_one(config: JobConfig, point: tuple, rep: int, estimator, layout) -> dict:
    idx, periods, noise, blur = point
    s, b = config.scene, config.bench
    ppp = s.pixels_per_period
    rng = np.random.default_rng([config.seed, idx, rep])
    size = _bench_frame(config.kind, periods, ppp)
    theta = float(rng.uniform(-b.theta_range, b.theta_range))
    if config.kind == "megarena":
        cells = layout.present.shape[1]
        reach = 0.75 * size / ppp + 2
        x, y = (float(v) for v in rng.uniform(reach, cells - 1 - reach, size=2))
        rpose = view_pose(x, y, theta, ppp, origin=layout.origin)
    else:
        x, y = (float(v) for v in rng.uniform(-0.5, 0.5, size=2))
        rpose = RenderPose(x, y, theta, ppp)
    img = render(layout, rpose, size, s.supersample)
    if noise > 0 or blur > 0:
        img = degrade(img, SensorSpec(bit_depth=16, gaussian_noise_sigma=noise, blur_sigma=blur), seed=int(rng.integers(2**63)))
    t0 = time.perf_counter()
    try:
        if config.kind == "megarena":
            absolute = estimator.estimate(img)[1]
            ex, ey, et = absolute.x - x, absolute.y - y, absolute.theta - theta
        else:
            est = estimator.estimate(img)[0][1]
            ex, ey, et = est.tx - x, est.ty - y, est.theta - theta
        ok = True
    except PhasemarkError:
        ex = ey = et = float("nan")
        ok = False
    latency = time.perf_counter() - t0
    return {"ok": ok, "ex": ex, "ey": ey, "et": float(signed_angle(et)) if ok else et, "latency": latency}


def _std(values) -> float:
    return float(np.std(values)) if len(values) else float("nan")


def bench_records(config: JobConfig) -> list:
    """One summary record per sweep grid point, in sorted grid order."""
    b = config.bench
    grid = sorted({(int(p), float(n), float(bl)) for p in b.periods for n in b.noise for bl in b.blur})
    points = [(k,) + g for k, g in enumerate(grid)]
    if b.repetitions == 0:
        return []
    ppp = config.scene.pixels_per_period
    tools = {}
    for _, periods, _, _ in points:
        if periods in tools:
            continue
        if config.kind == "megarena":
            est = _megarena_estimator(config)
            tools[periods] = (est, layout_megarena(est.spec_))
        else:
            tools[periods] = (_small_estimator(config, periods), _layout(config, periods_across=periods))
    tasks = [(pt, r) for pt in points for r in range(b.repetitions)]

    def run(task):
        pt, r = task
        est, layout = tools[pt[1]]
        return task[0][0], r, _bench_one(config, pt, r, est, layout)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    results.sort(key=lambda item: (item[0], item[1]))
    records = []
    for idx, periods, noise, blur in points:
        rows = [res for k, _, res in results if k == idx]
        good = [r for r in rows if r["ok"]]
        ex = np.array([r["ex"] for r in good])
        ey = np.array([r["ey"] for r in good])
        et = np.array([r["et"] for r in good])
        sx, sy = _std(ex), _std(ey)
        records.append(
            {
                "schema_version": SCHEMA_VERSION,
                "kind": config.kind,
                "periods": periods,
                "noise": noise,
                "blur": blur,
                "repetitions": len(rows),
                "successes": len(good),
                "success_rate": len(good) / len(rows),
                "std_x_px": sx * ppp,
                "std_y_px": sy * ppp,
                "std_xy_px": math.sqrt(0.5 * (sx**2 + sy**2)) * ppp,
                "std_x_periods": sx,
                "std_y_periods": sy,
                "std_theta_mrad": 1e3 * _std(et),
                "mean_x_px": float(ex.mean()) * ppp if len(ex) else float("nan"),
                "mean_y_px": float(ey.mean()) * ppp if len(ey) else float("nan"),
                "mean_latency_ms": 1e3 * float(np.mean([r["latency"] for r in rows])),
            }
        )
    return records


def cmd_bench(config: JobConfig) -> str:
    """Sweep table as CSV (or JSON when ``config.format`` is json)."""
    records = bench_records(config)
    if (config.format or "csv") == "json":
        return _dumps({"schema_version": SCHEMA_VERSION, "command": "bench", "status": "ok", "points": records})
    return _csv_text(records, BENCH_COLUMNS)


def cmd_layout(config: JobConfig, output: Optional[str] = None) -> dict:
    """Export the configured marker as SVG, or PNG/PGM by file suffix."""
    output = output or config.io.output
    if not output:
        raise ConfigError("layout needs an output path (--output or io.output)")
    layout = _layout(config)
    suffix = Path(output).suffix.lower()
    if suffix == ".svg":
        export_svg(layout, output)
    elif suffix in (".png", ".pgm"):
        save_image(layout_to_image(layout, config.scene.pixels_per_period), output, bit_depth=config.scene.bit_depth)
    else:
        raise ConfigError(f"layout output must end in .svg, .png or .pgm, got {output!r}")
    rows, cols = layout.present.shape
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "layout",
        "status": "ok",
        "output": str(output),
        "rows": rows,
        "cols": cols,
        "dots": int(layout.present.sum()),
    }


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON job configuration")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--output", metavar="PATH", help="output file (default: standard output for records)")
    common.add_argument("--format", choices=FORMATS, help="record format")
    common.add_argument("--threads", type=int, help="worker threads for bench sweeps")
    common.add_argument("--no-apodize", action="store_true", help="disable the Hann window before the FFT")
    common.add_argument("--quiet", action="store_true", help="suppress guideline diagnostics on stderr")
    parser = argparse.ArgumentParser(prog="phasemark", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("render", parents=[common], help="render a synthetic scene with a ground-truth sidecar")
    est = sub.add_parser("estimate", parents=[common], help="estimate marker poses in an image")
    est.add_argument("image", nargs="?", help="PNG or PGM image (default: io.image)")
    sub.add_parser("bench", parents=[common], help="run an accuracy sweep and write CSV")
    sub.add_parser("layout", parents=[common], help="export a marker layout as SVG or PNG")
    return parser


def _apply_flags(config: JobConfig, args) -> JobConfig:
    if args.seed is not None:
        config.seed = args.seed
    if args.format is not None:
        config.format = args.format
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        config.threads = args.threads
    if args.no_apodize:
        config.analysis.apodize = False
    return config


def _error_record(command: str, exc: PhasemarkError) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": "error",
        "error": {"type": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code},
    }


def _format_record(record: dict, fmt: str) -> str:
    if fmt == "json":
        return _dumps(record)
    if record.get("command") == "estimate" and record.get("status") == "ok":
        base = {"schema_version": record["schema_version"], "kind": record["kind"], "image": record.get("image")}
        rows = [dict(base, **_flatten(p)) for p in record["poses"]]
        return _csv_text(rows)
    return _csv_text([_flatten(record)])


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = args.format or "json"
    # the guideline report replaces the renderer's own warnings
    warnings.simplefilter("ignore", GuidelineWarning)
    try:
        config = _apply_flags(load_config(args.config), args)
        fmt = config.format or ("csv" if args.command == "bench" else "json")
        if args.command == "render":
            record = cmd_render(config, args.output, args.quiet)
            if not args.quiet:
                sys.stdout.write(_format_record(record, fmt))
        elif args.command == "estimate":
            record = cmd_estimate(config, args.image)
            _warn(guidelines.GuidelineReport([guidelines.GuidelineCheck(**c) for c in record["guidelines"]]), args.quiet)
            _emit(_format_record(record, fmt), args.output)
        elif args.command == "bench":
            _emit(cmd_bench(config), args.output or config.io.output)
        else:
            record = cmd_layout(config, args.output)
            if not args.quiet:
                sys.stdout.write(_format_record(record, fmt))
    except PhasemarkError as exc:
        sys.stdout.write(_format_record(_error_record(args.command, exc), fmt))
        if not args.quiet:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
