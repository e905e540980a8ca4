"""Sweep orchestration: expand a run configuration into cells, run them
(optionally in parallel) and write one CSV row per cell."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable

import yaml

from . import __version__
from .buffers import RLC_BUFFER_BYTES
from .metrics import CSV_COLUMNS, MetricRecord, write_csv
from .scenario import CellConfig, ScenarioKind, UnknownScenario, simulate
from .topology import DOWNLINK_RATE_BPS, LOSS_PROB, UPLINK_RATE_BPS, LinkModel
from .traffic import builtin_trace, load_trace_csv


class ConfigError(ValueError):
    """Invalid sweep configuration."""


class IoError(OSError):
    """Output (or trace input) path unusable."""


class UnknownFigure(ValueError):
    pass


_RANGE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")


def parse_int_list(value, what: str = "value") -> tuple[int, ...]:
    """Accept ``7``, ``"4..21"``, ``"4,5,9"``, ``"1..3,8"`` or a list of those."""
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected integers, got {value!r}")
    if isinstance(value, int):
        return (value,)
    if isinstance(value, (list, tuple)):
        out: list[int] = []
        for v in value:
            out.extend(parse_int_list(v, what))
        return tuple(out)
    if isinstance(value, str):
        out = []
        for part in value.split(","):
            part = part.strip()
            if not part:
                continue
            m = _RANGE.match(part)
            if m:
                lo, hi = int(m.group(1)), int(m.group(2))
                if hi < lo:
                    raise ConfigError(f"{what}: empty range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                try:
                    out.append(int(part))
                except ValueError:
                    raise ConfigError(f"{what}: cannot parse {part!r}") from None
        return tuple(out)
    raise ConfigError(f"{what}: cannot parse {value!r}")


def parse_float_list(value, what: str = "value") -> tuple[float, ...]:
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected numbers, got {value!r}")
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, (list, tuple)):
        out: list[float] = []
        for v in value:
            out.extend(parse_float_list(v, what))
        return tuple(out)
    if isinstance(value, str):
        try:
            return tuple(float(p) for p in value.split(",") if p.strip())
        except ValueError:
            raise ConfigError(f"{what}: cannot parse {value!r}") from None
    raise ConfigError(f"{what}: cannot parse {value!r}")


def parse_scenarios(value) -> tuple[str, ...]:
    if isinstance(value, str):
        items = [v.strip() for v in value.split(",") if v.strip()]
    elif isinstance(value, (list, tuple)):
        items = [str(v).strip() for v in value]
    else:
        raise ConfigError(f"scenario: cannot parse {value!r}")
    if len(items) == 1 and items[0].lower() == "all":
        return tuple(k.value for k in ScenarioKind)
    try:
        return tuple(ScenarioKind.parse(v).value for v in items)
    except UnknownScenario as exc:
        raise ConfigError(str(exc)) from None


_ALIASES = {"scenario": "scenarios", "vehicles": "n_vehicles", "seed": "seeds"}
_BOTH_LINKS = {"loss_prob": ("loss_prob_ul", "loss_prob_dl"),
               "buffer_bytes": ("buffer_bytes_ul", "buffer_bytes_dl")}


def normalize_mapping(data, base_dir: Path | None = None) -> dict:
    """Canonical keys: aliases resolved, both-link shorthands expanded,
    relative trace paths anchored at ``base_dir``.  Unknown keys raise."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    out: dict = {}
    for k, v in data.items():
        k = str(k).replace("-", "_")
        k = _ALIASES.get(k, k)
        if k in _BOTH_LINKS:
            for kk in _BOTH_LINKS[k]:
                out.setdefault(kk, v)
            continue
        if k in out and k not in ("loss_prob_ul", "loss_prob_dl", "buffer_bytes_ul",
                                  "buffer_bytes_dl"):
            raise ConfigError(f"key {k!r} given twice")
        out[k] = v
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(out) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys {unknown}")
    tf = out.get("trace_file")
    if tf is not None and base_dir is not None and not Path(str(tf)).is_absolute():
        out["trace_file"] = str(base_dir / str(tf))
    return out


# fields that do not change results and so stay out of the config hash
_NON_SEMANTIC = {"out", "jobs"}


@dataclass(frozen=True)
class RunConfig:
    """A sweep: the cross product of scenarios, vehicle counts, frame rates
    and seeds, plus the shared cell parameters."""
    scenarios: tuple[str, ...] = ("mff",)
    n_vehicles: tuple[int, ...] = (4,)
    fps: tuple[float, ...] = (30.0,)
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    sim_time: float = 15.0
    warmup: float = 0.5
    uplink_rate: float = UPLINK_RATE_BPS
    downlink_rate: float = DOWNLINK_RATE_BPS
    loss_prob_ul: float = LOSS_PROB
    loss_prob_dl: float = LOSS_PROB
    buffer_bytes_ul: int = RLC_BUFFER_BYTES
    buffer_bytes_dl: int = RLC_BUFFER_BYTES
    trace_file: str | None = None
    trace_jitter: bool = False
    processing_delay: float = 0.0
    min_fragment_fraction: float = 0.9
    scheduling_lead_symbols: int = 2
    columns: tuple[str, ...] | None = None
    out: str | None = None
    jobs: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.scenarios:
            raise ConfigError("no scenarios given")
        if not self.n_vehicles:
            raise ConfigError("no vehicle counts given")
        if not self.fps:
            raise ConfigError("no frame rates given")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if any(n < 1 for n in self.n_vehicles):
            raise ConfigError("vehicle counts must be >= 1")
        if any(f <= 0 for f in self.fps):
            raise ConfigError("frame rates must be positive")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.sim_time <= 0 or not 0 <= self.warmup < self.sim_time:
            raise ConfigError("need sim_time > warmup >= 0")
        if self.uplink_rate <= 0 or self.downlink_rate <= 0:
            raise ConfigError("link rates must be positive")
        for p in (self.loss_prob_ul, self.loss_prob_dl):
            if not 0.0 <= p <= 1.0:
                raise ConfigError("loss probabilities must lie in [0, 1]")
        if self.buffer_bytes_ul <= 0 or self.buffer_bytes_dl <= 0:
            raise ConfigError("buffer sizes must be positive")
        if not 0.0 <= self.min_fragment_fraction <= 1.0:
            raise ConfigError("min_fragment_fraction must lie in [0, 1]")
        if self.processing_delay < 0 or self.scheduling_lead_symbols < 0:
            raise ConfigError("processing_delay and scheduling_lead_symbols must be >= 0")
        if self.columns is not None:
            bad = [c for c in self.columns if c not in CSV_COLUMNS]
            if bad:
                raise ConfigError(f"unknown output columns {bad}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    # --- construction ---------------------------------------------------
    @classmethod
    def from_mapping(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        """Build from a config-file mapping; list-valued keys accept the
        range syntax of :func:`parse_int_list`."""
        data = normalize_mapping(data, base_dir)
        kw: dict = {}
        for k, v in data.items():
            try:
                if k == "scenarios":
                    kw[k] = parse_scenarios(v)
                elif k in ("n_vehicles", "seeds"):
                    kw[k] = parse_int_list(v, k)
                elif k == "fps":
                    kw[k] = parse_float_list(v, k)
                elif k == "columns":
                    kw[k] = None if v is None else tuple(
                        c.strip() for c in (v.split(",") if isinstance(v, str) else v))
                elif k == "trace_jitter":
                    kw[k] = bool(v)
                elif k in ("buffer_bytes_ul", "buffer_bytes_dl", "scheduling_lead_symbols"):
                    kw[k] = int(v)
                elif k == "jobs":
                    kw[k] = None if v is None else int(v)
                elif k in ("out", "trace_file"):
                    kw[k] = None if v is None else str(v)
                else:
                    kw[k] = float(v)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{k}: {exc}") from None
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc.strerror or exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(data or {}, base_dir=path.parent)

    @staticmethod
    def load_mapping(path) -> dict:
        """Normalized key/value mapping of a config file (for layering)."""
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc.strerror or exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return normalize_mapping(data or {}, path.parent)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    # --- derived --------------------------------------------------------
    def semantic_dict(self) -> dict:
        d = asdict(self)
        for k in _NON_SEMANTIC:
            d.pop(k)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        if self.trace_file is not None:
            # hash the trace content, not where it happens to live
            try:
                d["trace_file"] = hashlib.sha256(Path(self.trace_file).read_bytes()).hexdigest()
            except OSError:
                pass
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def trace(self):
        if self.trace_file is None:
            return tuple(builtin_trace())
        try:
            return tuple(load_trace_csv(self.trace_file))
        except OSError as exc:
            raise IoError(f"cannot read trace {self.trace_file}: {exc.strerror or exc}") from None
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def cells(self) -> list[CellConfig]:
        """Every (scenario, n, fps, seed) cell, in the canonical order."""
        trace = self.trace()
        have = {e.vehicle_count for e in trace}
        missing = sorted(set(self.n_vehicles) - have)
        if missing:
            raise ConfigError(f"no frame-size trace entry for vehicle counts {missing}")
        link = LinkModel(self.uplink_rate, self.downlink_rate, self.loss_prob_ul, self.loss_prob_dl)
        out = []
        for sc in self.scenarios:
            for n in sorted(set(self.n_vehicles)):
                for fps in sorted(set(self.fps)):
                    for seed in sorted(set(self.seeds)):
                        out.append(CellConfig(
                            scenario=sc, n_vehicles=n, fps=fps, seed=seed,
                            sim_time=self.sim_time, warmup=self.warmup, link=link,
                            buffer_bytes_ul=self.buffer_bytes_ul,
                            buffer_bytes_dl=self.buffer_bytes_dl,
                            trace=trace, trace_jitter=self.trace_jitter,
                            processing_delay=self.processing_delay,
                            min_fragment_fraction=self.min_fragment_fraction,
                            scheduling_lead_symbols=self.scheduling_lead_symbols))
        return out


def _sort_key(r: MetricRecord):
    return (r.scenario, r.n_vehicles, r.fps, r.seed)


@dataclass
class SweepResult:
    records: list[MetricRecord]
    config_hash: str
    version: str = __version__
    timestamp: str = ""
    columns: tuple[str, ...] | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=_sort_key)
        if not self.timestamp:
            self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        self.provenance = {"config_sha256": self.config_hash, "version": self.version,
                           "timestamp": self.timestamp}

    def header_lines(self) -> list[str]:
        return [f"skyrelay {self.version}", f"config_sha256 {self.config_hash}",
                f"timestamp {self.timestamp}"]

    def write(self, fh) -> None:
        write_csv(self.records, fh, self.header_lines(), self.columns)

    def save(self, path) -> None:
        path = Path(path)
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                self.write(fh)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


def _check_writable(path) -> None:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if p.is_dir():
        raise IoError(f"output path {p} is a directory")
    if not parent.is_dir():
        raise IoError(f"output directory {parent} does not exist")
    if not os.access(parent, os.W_OK) or (p.exists() and not os.access(p, os.W_OK)):
        raise IoError(f"output path {p} is not writable")


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # not available on every platform
        return max(1, os.cpu_count() or 1)


def run_cells(cells: Iterable[CellConfig], jobs: int = 1,
              progress: Callable[[MetricRecord], None] | None = None) -> list[MetricRecord]:
    cells = list(cells)
    if jobs <= 1 or len(cells) <= 1:
        out = []
        for c in cells:
            r = simulate(c)
            out.append(r)
            if progress:
                progress(r)
        return out
    out = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for r in pool.map(simulate, cells, chunksize=max(1, len(cells) // (8 * jobs))):
            out.append(r)
            if progress:
                progress(r)
    return out


def run_sweep(cfg: RunConfig, jobs: int | None = None,
              progress: Callable[[MetricRecord], None] | None = None) -> SweepResult:
    """Run every cell of ``cfg``; writes the CSV when ``cfg.out`` is set."""
    if cfg.out is not None:
        _check_writable(cfg.out)
    cells = cfg.cells()
    jobs = jobs or cfg.jobs or default_jobs()
    records = run_cells(cells, jobs, progress)
    result = SweepResult(records, cfg.config_hash(), columns=cfg.columns)
    if cfg.out is not None:
        result.save(cfg.out)
    return result


_ALL = tuple(k.value for k in ScenarioKind)
_FIG3_N = tuple(range(4, 22))
_FIGURES = {
    "fig3a": dict(scenarios=_ALL, n_vehicles=_FIG3_N, fps=(15.0, 30.0),
                  columns=("throughput_mbps",)),
    "fig3b": dict(scenarios=_ALL, n_vehicles=_FIG3_N, fps=(15.0, 30.0),
                  columns=("latency_ms",)),
    "fig3c": dict(scenarios=_ALL, n_vehicles=_FIG3_N, fps=(15.0, 30.0),
                  columns=("reliability_pct",)),
    "fig4": dict(scenarios=("bfa",), n_vehicles=_FIG3_N, fps=(30.0,),
                 columns=("l1_ms", "l2_ms")),
}


def figure_names() -> list[str]:
    return sorted(_FIGURES)


def figure_recipe(name: str, **overrides) -> RunConfig:
    """Canned sweep producing the data behind one published figure."""
    try:
        base = _FIGURES[str(name).lower()]
    except KeyError:
        raise UnknownFigure(f"unknown figure {name!r}; expected one of {figure_names()}") from None
    return RunConfig(**{**base, **overrides})
