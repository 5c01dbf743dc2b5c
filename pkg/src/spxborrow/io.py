"""CSV ingestion, run configuration, bundled case-study data, and reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields as dc_fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .design import DesignConfig
from .inference import McmcConfig, RmapParams, StepSizes
from .model import Dataset, SpxHyperParams, TrialSummary
from .simulate import (
    OperatingCharacteristics,
    ReplicateRecord,
    ScenarioConfig,
    SweepPoint,
)

CONFIG_SCHEMA_VERSION = 1

REQUIRED_COLUMNS = ("trial_id", "n", "y")
NEW_TRIAL_FLAG = "is_new"


class DataValidationError(ValueError):
    """Raised for malformed or inconsistent trial tables."""


class ConfigError(ValueError):
    """Raised for unreadable, unknown-key, or ill-typed configuration."""


def fixture_path() -> Path:
    """Location of the bundled adalimumab case-study table."""
    return Path(str(resources.files("spxborrow").joinpath("data/adalimumab.csv")))


def _read_rows(path: str | Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"{path}: file not found")
    header: list[str] | None = None
    rows: list[tuple[int, list[str]]] = []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or (raw[0].startswith("#")):
                continue
            if header is None:
                header = [c.strip() for c in raw]
                continue
            rows.append((lineno, [c.strip() for c in raw]))
    if header is None:
        raise DataValidationError(f"{path}: no header row")
    return header, rows


def _parse_int(value: str, row: int, col: str, problems: list[str]) -> int | None:
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        problems.append(f"row {row}: column {col!r} is not an integer: {value!r}")
        return None


def _parse_float(value: str, row: int, col: str, problems: list[str]) -> float | None:
    try:
        out = float(value)
    except ValueError:
        problems.append(f"row {row}: column {col!r} is not numeric: {value!r}")
        return None
    if not math.isfinite(out):
        problems.append(f"row {row}: column {col!r} is not finite: {value!r}")
        return None
    return out


def load_historical_csv(
    path: str | Path, new_trial: Mapping[str, Any] | None = None
) -> Dataset:
    """Load a trial table and standardize its covariates.

    Schema: header ``trial_id,n,y`` followed by covariate columns, plus an
    optional trailing ``is_new`` column whose value 1 marks the new trial's
    row (its y, or y and n, may be blank at design time). Lines starting
    with ``#`` are comments.

    Continuous covariates are centered and scaled to unit variance across
    the historical rows; 0/1-valued columns are left alone. A ``new_trial``
    mapping may supply the new trial's ``y``/``n`` and raw-scale covariate
    values, overriding the flagged row field by field; with neither, the
    new-trial covariates default to the historical means.
    """
    header, rows = _read_rows(path)
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise DataValidationError(f"{path}: missing required column {col!r}")
    if list(header[:3]) != list(REQUIRED_COLUMNS):
        raise DataValidationError(
            f"{path}: header must start with {','.join(REQUIRED_COLUMNS)}"
        )
    cov_names = [c for c in header[3:] if c != NEW_TRIAL_FLAG]
    if NEW_TRIAL_FLAG in header and header.index(NEW_TRIAL_FLAG) != len(header) - 1:
        raise DataValidationError(f"{path}: {NEW_TRIAL_FLAG} must be the last column")
    if len(set(header)) != len(header):
        raise DataValidationError(f"{path}: duplicate column names")

    problems: list[str] = []
    hist_rows: list[dict[str, Any]] = []
    new_row: dict[str, Any] | None = None
    for lineno, cells in rows:
        if len(cells) != len(header):
            problems.append(
                f"row {lineno}: expected {len(header)} columns, got {len(cells)}"
            )
            continue
        rec = dict(zip(header, cells))
        is_new = rec.get(NEW_TRIAL_FLAG, "") in ("1", "true", "True")
        parsed: dict[str, Any] = {"id": rec["trial_id"], "line": lineno}
        parsed["n"] = _parse_int(rec["n"], lineno, "n", problems)
        parsed["y"] = _parse_int(rec["y"], lineno, "y", problems)
        parsed["cov"] = [
            _parse_float(rec[c], lineno, c, problems) for c in cov_names
        ]
        if is_new:
            if new_row is not None:
                problems.append(f"row {lineno}: second {NEW_TRIAL_FLAG} row")
            new_row = parsed
        else:
            if parsed["n"] is None or parsed["y"] is None:
                problems.append(f"row {lineno}: historical trials need n and y")
            hist_rows.append(parsed)
    if not hist_rows:
        problems.append("no historical trial rows")
    for rec in hist_rows:
        if rec["n"] is not None and rec["n"] <= 0:
            problems.append(f"row {rec['line']}: n must be positive")
        if (
            rec["n"] is not None
            and rec["y"] is not None
            and not 0 <= rec["y"] <= rec["n"]
        ):
            problems.append(
                f"row {rec['line']}: need 0 <= y <= n, got y={rec['y']}, n={rec['n']}"
            )
    if problems:
        raise DataValidationError(f"{path}: " + "; ".join(problems))

    n_cov = len(cov_names)
    hist_cov = [rec["cov"] for rec in hist_rows]
    means = [sum(col) / len(col) for col in zip(*hist_cov)] if n_cov else []
    binary = [all(v in (0.0, 1.0) for v in col) for col in zip(*hist_cov)]
    sds = []
    for j in range(n_cov):
        col = [row[j] for row in hist_cov]
        var = sum((v - means[j]) ** 2 for v in col) / len(col)
        sds.append(math.sqrt(var))

    def standardize(raw: list[float]) -> tuple[float, ...]:
        out = [1.0]
        for j, v in enumerate(raw):
            if binary[j]:
                out.append(v)
            else:
                if sds[j] == 0.0:
                    raise DataValidationError(
                        f"{path}: covariate {cov_names[j]!r} is constant; "
                        "cannot standardize"
                    )
                out.append((v - means[j]) / sds[j])
        return tuple(out)

    historical = tuple(
        TrialSummary(
            id=rec["id"], n=rec["n"], y=rec["y"], x=standardize(rec["cov"])
        )
        for rec in hist_rows
    )

    new_y = new_row["y"] if new_row else None
    new_n = new_row["n"] if new_row else None
    new_cov = list(new_row["cov"]) if new_row else list(means)
    new_id = new_row["id"] if new_row else "new"
    if new_trial is not None:
        extra = set(new_trial) - {"y", "n", "id"} - set(cov_names)
        if extra:
            raise DataValidationError(
                f"new_trial has unknown fields: {sorted(extra)}"
            )
        new_y = new_trial.get("y", new_y)
        new_n = new_trial.get("n", new_n)
        new_id = new_trial.get("id", new_id)
        for j, c in enumerate(cov_names):
            if c in new_trial:
                new_cov[j] = float(new_trial[c])
    if new_y is not None:
        new_y = int(new_y)
    if new_n is not None:
        new_n = int(new_n)
    new = TrialSummary(id=str(new_id), n=new_n, y=new_y, x=standardize(new_cov))
    return Dataset(historical=historical, new_trial=new)


def load_case_study(new_trial: Mapping[str, Any] | None = None) -> Dataset:
    """The bundled adalimumab table, optionally with a new-trial record."""
    return load_historical_csv(fixture_path(), new_trial)


# --------------------------------------------------------------------------
# Run configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """One CLI run: what to do, on which data, with which constants."""

    mode: str
    model: str = "spx"
    seed: int = 0
    replicates: int = 500
    out: str | None = None
    data: str | None = None
    new_trial: dict[str, Any] | None = None
    report_format: str = "table"
    spx: SpxHyperParams = field(default_factory=SpxHyperParams)
    rmap: RmapParams = field(default_factory=RmapParams)
    mcmc: McmcConfig | None = None
    design: DesignConfig | None = None
    scenario: ScenarioConfig | None = None
    trial_design: str = "fixed"
    sweep_rates: tuple[float, ...] | None = None
    sweep_n: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("fit", "ess", "design", "simulate", "sweep"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.model not in ("spx", "rmap", "independent"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.trial_design not in ("fixed", "adaptive"):
            raise ConfigError(f"unknown design {self.trial_design!r}")
        if self.report_format not in ("table", "delimited", "structured"):
            raise ConfigError(f"unknown format {self.report_format!r}")
        if self.replicates < 1:
            raise ConfigError("replicates must be positive")


_SECTION_TYPES = {
    "spx": SpxHyperParams,
    "rmap": RmapParams,
    "design": DesignConfig,
}
_TOP_KEYS = {
    "schema_version",
    "mode",
    "model",
    "seed",
    "replicates",
    "out",
    "data",
    "new_trial",
    "format",
    "design_type",
    "spx",
    "rmap",
    "mcmc",
    "design",
    "scenario",
    "sweep",
}


def _build_section(cls, section: Mapping[str, Any], name: str):
    allowed = {f.name for f in dc_fields(cls)}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"section {name!r} has unknown keys: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


def _build_mcmc(section: Mapping[str, Any]) -> McmcConfig:
    section = dict(section)
    profile = section.pop("profile", None)
    base = McmcConfig.fast() if profile == "fast" else McmcConfig()
    if profile not in (None, "fast", "analysis"):
        raise ConfigError(f"mcmc profile must be fast or analysis, got {profile!r}")
    steps = section.pop("step_sizes", None)
    allowed = {"chains", "burn_in", "samples", "thin", "seed"}
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"section 'mcmc' has unknown keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {
        "chains": base.chains,
        "burn_in": base.burn_in,
        "samples": base.samples,
        "thin": base.thin,
        "seed": base.seed,
    }
    kwargs.update(section)
    if steps is not None:
        kwargs["step_sizes"] = _build_section(StepSizes, steps, "mcmc.step_sizes")
    try:
        return McmcConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section 'mcmc': {exc}") from exc


def _build_scenario(section: Mapping[str, Any]) -> ScenarioConfig:
    section = dict(section)
    sid = section.pop("scenario_id", None)
    if sid is not None:
        try:
            return ScenarioConfig.from_scenario(int(sid), **section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"section 'scenario': {exc}") from exc
    return _build_section(ScenarioConfig, section, "scenario")


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a JSON run configuration; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: file not found")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(payload) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys: {sorted(unknown)}")
    version = payload.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: schema_version must be {CONFIG_SCHEMA_VERSION}, got {version!r}"
        )
    if "mode" not in payload:
        raise ConfigError(f"{path}: missing required key 'mode'")

    kwargs: dict[str, Any] = {"mode": payload["mode"]}
    for key, target in (
        ("model", "model"),
        ("seed", "seed"),
        ("replicates", "replicates"),
        ("out", "out"),
        ("data", "data"),
        ("new_trial", "new_trial"),
        ("format", "report_format"),
        ("design_type", "trial_design"),
    ):
        if key in payload:
            kwargs[target] = payload[key]
    for key, cls in _SECTION_TYPES.items():
        if key in payload:
            kwargs[key] = _build_section(cls, payload[key], key)
    if "mcmc" in payload:
        kwargs["mcmc"] = _build_mcmc(payload["mcmc"])
    if "scenario" in payload:
        kwargs["scenario"] = _build_scenario(payload["scenario"])
    if "sweep" in payload:
        sweep = dict(payload["sweep"])
        unknown = set(sweep) - {"rates", "rate_min", "rate_max", "rate_step", "n"}
        if unknown:
            raise ConfigError(f"section 'sweep' has unknown keys: {sorted(unknown)}")
        if "rates" in sweep:
            kwargs["sweep_rates"] = tuple(float(r) for r in sweep["rates"])
        elif {"rate_min", "rate_max", "rate_step"} <= set(sweep):
            lo, hi, step = (
                float(sweep["rate_min"]),
                float(sweep["rate_max"]),
                float(sweep["rate_step"]),
            )
            count = int(round((hi - lo) / step)) + 1
            kwargs["sweep_rates"] = tuple(round(lo + k * step, 10) for k in range(count))
        if "n" in sweep:
            kwargs["sweep_n"] = int(sweep["n"])
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _section_dict(obj) -> dict[str, Any]:
    out = {}
    for f in dc_fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def dump_run_config(cfg: RunConfig, path: str | Path) -> None:
    """Write a config back out in canonical form (round-trips via load)."""
    payload: dict[str, Any] = {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "mode": cfg.mode,
        "model": cfg.model,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "format": cfg.report_format,
        "design_type": cfg.trial_design,
        "spx": _section_dict(cfg.spx),
        "rmap": _section_dict(cfg.rmap),
    }
    if cfg.out is not None:
        payload["out"] = cfg.out
    if cfg.data is not None:
        payload["data"] = cfg.data
    if cfg.new_trial is not None:
        payload["new_trial"] = dict(cfg.new_trial)
    if cfg.mcmc is not None:
        mc = _section_dict(cfg.mcmc)
        mc["step_sizes"] = _section_dict(cfg.mcmc.step_sizes)
        mc.pop("adapt_burnin", None)
        payload["mcmc"] = mc
    if cfg.design is not None:
        payload["design"] = _section_dict(cfg.design)
    if cfg.scenario is not None:
        payload["scenario"] = _section_dict(cfg.scenario)
    if cfg.sweep_rates is not None or cfg.sweep_n is not None:
        sweep: dict[str, Any] = {}
        if cfg.sweep_rates is not None:
            sweep["rates"] = list(cfg.sweep_rates)
        if cfg.sweep_n is not None:
            sweep["n"] = cfg.sweep_n
        payload["sweep"] = sweep
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportBundle:
    """Everything a run may want written out."""

    oc: dict[str, OperatingCharacteristics] | None = None
    replicates: dict[str, list[ReplicateRecord]] | None = None
    sweep: list[SweepPoint] | None = None
    fit: dict[str, Any] | None = None


_OC_METRICS = (
    ("Size", "mean_size", "{:.1f}"),
    ("RMSE", "rmse", "{:.3f}"),
    ("Coverage", "coverage", "{:.1f}"),
    ("Width", "width", "{:.3f}"),
    ("Type I", "type1", "{:.1f}"),
    ("Power", "power", "{:.1f}"),
)


def _oc_table_text(ocs: dict[str, OperatingCharacteristics]) -> str:
    labels = list(ocs)
    widths = [max(10, len(lab) + 2) for lab in labels]
    lines = ["{:<10}".format("metric") + "".join(
        f"{lab:>{w}}" for lab, w in zip(labels, widths)
    )]
    for name, attr, fmt in _OC_METRICS:
        row = f"{name:<10}"
        for lab, w in zip(labels, widths):
            row += f"{fmt.format(getattr(ocs[lab], attr)):>{w}}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _write_csv(path: Path, header: list[str], rows: list[list[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_table(path: str | Path) -> list[dict[str, str]]:
    """Reload a delimited report as a list of row dicts."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_report(
    results: ReportBundle, report_format: str, out_dir: str | Path
) -> list[Path]:
    """Write the run's outputs in the chosen format and return the paths."""
    if report_format not in ("table", "delimited", "structured"):
        raise ValueError(f"unknown format {report_format!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if results.oc is not None:
        if not results.oc:
            raise ValueError("empty operating-characteristics set")
        for label, oc in results.oc.items():
            if oc.n_replicates < 1:
                raise ValueError(f"{label}: empty replicate set")
        if report_format == "table":
            p = out / "oc_table.txt"
            p.write_text(_oc_table_text(results.oc))
            written.append(p)
        elif report_format == "delimited":
            p = out / "oc.csv"
            rows = [
                [
                    label,
                    f"{oc.mean_size:.1f}",
                    f"{oc.rmse:.3f}",
                    f"{oc.coverage:.1f}",
                    f"{oc.width:.3f}",
                    f"{oc.type1:.1f}",
                    f"{oc.power:.1f}",
                    f"{oc.mean_rb_weights[0]:.3f}",
                    f"{oc.mean_rb_weights[1]:.3f}",
                    f"{oc.mean_rb_weights[2]:.3f}",
                    oc.n_replicates,
                ]
                for label, oc in results.oc.items()
            ]
            _write_csv(
                p,
                [
                    "label", "size", "rmse", "coverage", "width", "type1",
                    "power", "p_hist", "p_reg", "p_ind", "n_replicates",
                ],
                rows,
            )
            written.append(p)

    if results.replicates is not None and report_format == "delimited":
        p = out / "replicates.csv"
        rows = []
        for label, records in results.replicates.items():
            if not records:
                raise ValueError(f"{label}: empty replicate set")
            for r in records:
                rows.append(
                    [
                        label, r.replicate, r.size, f"{r.post_mean:.6f}",
                        f"{r.error:.6f}", int(r.covered), f"{r.width:.6f}",
                        int(r.positive), int(r.clinical), f"{r.p_hist:.6f}",
                        f"{r.p_reg:.6f}", f"{r.p_ind:.6f}",
                        "" if r.ess is None else f"{r.ess:.3f}",
                    ]
                )
        _write_csv(
            p,
            [
                "label", "replicate", "size", "post_mean", "error", "covered",
                "width", "positive", "clinical", "p_hist", "p_reg", "p_ind",
                "ess",
            ],
            rows,
        )
        written.append(p)

    if results.sweep is not None:
        if not results.sweep:
            raise ValueError("empty sweep")
        header = ["observed_rate", "p_hist", "p_reg", "p_ind", "stage2_total"]
        rows = [
            [
                f"{pt.observed_rate:.3f}",
                f"{pt.p_hist:.3f}",
                f"{pt.p_reg:.3f}",
                f"{pt.p_ind:.3f}",
                f"{pt.total_n:.1f}",
            ]
            for pt in results.sweep
        ]
        if report_format == "table":
            p = out / "sweep.txt"
            lines = ["  ".join(f"{h:>13}" for h in header)]
            lines += ["  ".join(f"{c:>13}" for c in row) for row in rows]
            p.write_text("\n".join(lines) + "\n")
        else:
            p = out / "sweep.csv"
            _write_csv(p, header, rows)
        written.append(p)

    if report_format == "structured" or results.fit is not None:
        payload: dict[str, Any] = {}
        if results.fit is not None:
            payload["fit"] = results.fit
        if results.oc is not None:
            payload["operating_characteristics"] = {
                label: _section_dict(oc) for label, oc in results.oc.items()
            }
        if results.sweep is not None:
            payload["sweep"] = [_section_dict(pt) for pt in results.sweep]
        if results.replicates is not None and report_format == "structured":
            payload["replicates"] = {
                label: [_section_dict(r) for r in records]
                for label, records in results.replicates.items()
            }
        p = out / "results.json"
        p.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(p)

    if not written:
        raise ValueError("nothing to report")
    return written
