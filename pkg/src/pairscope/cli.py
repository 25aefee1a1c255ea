"""Command-line entry point: chart, simulate, estimate, validate.

Configuration comes from an optional JSON file (``--config``) with flags
overriding file values; all randomness flows from one root seed through
named substreams, so any command with a fixed config and seed is
bit-deterministic.  Exit codes: 0 success, 2 config error, 3 numerical or
validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import estimate, fisher, protocol
from ._validation import FAULTS, run_checks
from .errors import ConfigError, PairscopeError
from .modes import BASIS_KINDS, ApertureConfig, QuadratureSpec, Scene, build_basis
from .seeds import stream_label, substream

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


@dataclass(frozen=True)
class RunConfig:
    """Flat, JSON-serializable run configuration with validated invariants."""

    schema_version: int = SCHEMA_VERSION
    seed: int = 1905
    delta: float = 2.0 * math.pi
    r: float = 2.0
    basis_kind: str = "psf-adapted"
    k_modes: int = 2
    theta_over_sigma: float = 0.1
    brightness_split: float = 0.5
    temporal_modes: int = 1
    epsilon: float = 0.01
    measure_mode: str = "parity"
    photons: int = 100000
    sim_mode: str = "fast"
    trials: int = 200
    photons_per_trial: int = 10000
    theta_min: float = 0.02
    theta_max: float = 1.0
    theta_steps: int = 25
    r_min: float = 0.0
    r_max: float = 5.0
    r_steps: int = 21
    mode_counts: tuple[int, ...] = (1, 2, 4, 8)
    quad_half_width_scale: float = 40.0
    quad_panels: int = 4096
    quad_nodes: int = 4

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        if self.basis_kind not in BASIS_KINDS:
            raise ConfigError(f"basis_kind must be one of {BASIS_KINDS}, got {self.basis_kind!r}")
        if self.sim_mode not in ("fast", "full"):
            raise ConfigError(f"sim_mode must be fast or full, got {self.sim_mode!r}")
        if not (0.0 < self.brightness_split < 1.0):
            raise ConfigError(f"brightness_split must be in (0, 1), got {self.brightness_split}")
        if self.photons < 0:
            raise ConfigError(f"photons must be >= 0, got {self.photons}")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mode_counts"] = list(self.mode_counts)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "mode_counts" in kwargs:
            kwargs["mode_counts"] = tuple(int(k) for k in kwargs["mode_counts"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)

    def dump(self, path: str) -> None:
        _atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    # -- derived objects ----------------------------------------------------

    @property
    def sigma(self) -> float:
        return 2.0 * math.pi / self.delta

    def aperture(self) -> ApertureConfig:
        return ApertureConfig.from_ratio(self.delta, self.r)

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(
            half_width_scale=self.quad_half_width_scale,
            panels=self.quad_panels,
            nodes_per_panel=self.quad_nodes,
        )

    def scene(self) -> Scene:
        return Scene.two_point(self.theta_over_sigma * self.sigma, split=self.brightness_split)

    def protocol_config(self) -> protocol.ProtocolConfig:
        basis = build_basis(self.aperture(), self.k_modes, kind=self.basis_kind, quad=self.quadrature())
        return protocol.ProtocolConfig(
            aperture=self.aperture(),
            basis=basis,
            scene=self.scene(),
            M=self.temporal_modes,
            epsilon=self.epsilon,
            measure_mode=self.measure_mode,
        )


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pairscope-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _apply_overrides(config: RunConfig, args: argparse.Namespace, names: dict[str, str]) -> RunConfig:
    updates = {}
    for arg_name, field_name in names.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            updates[field_name] = value
    if not updates:
        return config
    return RunConfig.from_dict({**config.to_dict(), **updates})


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    common = {"seed": "seed"}
    return _apply_overrides(config, args, common)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_chart(args: argparse.Namespace) -> int:
    config = _load_config(args)
    config = _apply_overrides(
        config,
        args,
        {
            "theta_min": "theta_min",
            "theta_max": "theta_max",
            "theta_steps": "theta_steps",
            "r_min": "r_min",
            "r_max": "r_max",
            "r_steps": "r_steps",
            "modes": "mode_counts",
        },
    )
    if config.theta_steps < 1 or config.r_steps < 1 or not config.mode_counts:
        raise ConfigError("chart grids must be nonempty")
    if config.theta_min <= 0 or config.theta_min > config.theta_max or config.r_min > config.r_max:
        raise ConfigError("chart grid bounds out of order (need 0 < theta_min <= theta_max, r_min <= r_max)")
    thetas = np.linspace(config.theta_min, config.theta_max, config.theta_steps)
    rs = np.linspace(config.r_min, config.r_max, config.r_steps)
    results = fisher.ratio_chart(
        config.delta, thetas, rs, config.mode_counts,
        kind=config.basis_kind, quad=config.quadrature(),
    )
    out = args.out or "chart.csv"
    buf = io.StringIO()
    fisher.write_chart_csv(results, buf)
    _atomic_write(out, buf.getvalue())
    print(f"wrote {len(results)} rows to {out}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    config = _apply_overrides(
        config,
        args,
        {
            "photons": "photons",
            "mode": "sim_mode",
            "temporal_modes": "temporal_modes",
            "k_modes": "k_modes",
            "theta": "theta_over_sigma",
            "r": "r",
        },
    )
    pconfig = config.protocol_config()
    analytic = fisher.outcome_probs(pconfig.aperture, pconfig.basis, pconfig.scene)
    n = config.photons

    lines = []
    cells = [0] * (2 * config.k_modes)
    if config.sim_mode == "fast":
        rng = substream(config.seed, "simulate")
        if n > 0:
            draws = rng.choice(2 * config.k_modes, size=n, p=np.array(analytic.probs))
            for i, o in enumerate(draws):
                cells[int(o)] += 1
                q, sign = divmod(int(o), 2)
                sign = 1 if sign == 0 else -1
                lines.append(json.dumps({"index": i, "q": q, "sign": sign}))
    else:
        for i in range(n):
            rng = substream(config.seed, "simulate", i)
            trace: dict = {}
            rec = protocol.run_protocol_once(pconfig, rng, trace=trace)
            cells[fisher.outcome_index(rec.q, rec.sign)] += 1
            lines.append(
                json.dumps(
                    {
                        "index": i,
                        "seed": stream_label(config.seed, "simulate", i),
                        "s": trace["s"],
                        "m": rec.m,
                        "q": rec.q,
                        "N_m": rec.N_m,
                        "f": rec.f,
                        "sign": rec.sign,
                        "stage_entries": trace["stage_entries"],
                        "ebits_consumed": trace["ebits_consumed"],
                    }
                )
            )

    out = args.out or "simulate_trace.jsonl"
    _atomic_write(out, "".join(line + "\n" for line in lines))

    def labeled(values) -> dict:
        return {
            f"{q}{'+' if s > 0 else '-'}": values[fisher.outcome_index(q, s)]
            for q, s in fisher.outcome_list(config.k_modes)
        }

    summary: dict = {
        "photons": n,
        "mode": config.sim_mode,
        "analytic": labeled(analytic.probs),
    }
    if n > 0:
        empirical = [c / n for c in cells]
        tv = 0.5 * sum(abs(e - p) for e, p in zip(empirical, analytic.probs))
        summary["empirical"] = labeled(empirical)
        summary["tv_distance"] = tv
        summary["tv_defined"] = True
    else:
        summary["empirical"] = None
        summary["tv_distance"] = None
        summary["tv_defined"] = False
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    config = _apply_overrides(
        config,
        args,
        {
            "trials": "trials",
            "photons_per_trial": "photons_per_trial",
            "k_modes": "k_modes",
            "theta": "theta_over_sigma",
            "r": "r",
        },
    )
    pconfig = config.protocol_config()
    theta_true = config.theta_over_sigma * config.sigma
    report = estimate.crb_experiment(
        pconfig, theta_true, config.photons_per_trial, config.trials, config.seed,
        mode=config.sim_mode,
    )
    out = args.out or "estimate_report.json"
    _atomic_write(out, json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
    if args.trials_csv:
        buf = io.StringIO()
        estimate.write_trials_csv(report, buf)
        _atomic_write(args.trials_csv, buf.getvalue())
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    results = run_checks(delta=config.delta, quad=config.quadrature(), fault=args.inject_fault)
    all_pass = True
    for res in results:
        print(res.line())
        all_pass = all_pass and res.passed
    if not all_pass:
        print("validation FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"all {len(results)} checks passed")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairscope",
        description="Entanglement-assisted two-telescope interferometry toolkit",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override file values")
    common.add_argument("--seed", type=int, help="root seed for all named substreams")
    common.add_argument("--out", help="output path")
    common.add_argument("--threads", type=int, default=1,
                        help="reserved; computations currently run single-threaded")

    sub = parser.add_subparsers(dest="command", required=True)

    p_chart = sub.add_parser("chart", parents=[common], help="CFI/QFI ratio chart CSV")
    p_chart.add_argument("--theta-min", dest="theta_min", type=float)
    p_chart.add_argument("--theta-max", dest="theta_max", type=float)
    p_chart.add_argument("--theta-steps", dest="theta_steps", type=int)
    p_chart.add_argument("--r-min", dest="r_min", type=float)
    p_chart.add_argument("--r-max", dest="r_max", type=float)
    p_chart.add_argument("--r-steps", dest="r_steps", type=int)
    p_chart.add_argument("--modes", type=_int_list, help="comma-separated K values")
    p_chart.set_defaults(func=cmd_chart)

    p_sim = sub.add_parser("simulate", parents=[common], help="protocol runs with JSONL trace")
    p_sim.add_argument("--photons", type=int)
    p_sim.add_argument("--mode", choices=("fast", "full"))
    p_sim.add_argument("--M", dest="temporal_modes", type=int)
    p_sim.add_argument("--K", dest="k_modes", type=int)
    p_sim.add_argument("--theta", type=float, help="theta / sigma")
    p_sim.add_argument("--r", type=float)
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", parents=[common], help="Cramer-Rao attainment experiment")
    p_est.add_argument("--trials", type=int)
    p_est.add_argument("--photons-per-trial", dest="photons_per_trial", type=int)
    p_est.add_argument("--K", dest="k_modes", type=int)
    p_est.add_argument("--theta", type=float, help="theta / sigma")
    p_est.add_argument("--r", type=float)
    p_est.add_argument("--trials-csv", dest="trials_csv", help="also write per-trial estimates")
    p_est.set_defaults(func=cmd_estimate)

    p_val = sub.add_parser("validate", parents=[common], help="run the self-check suite")
    p_val.add_argument("--inject-fault", choices=FAULTS, help="fault-injection canary (testing aid)")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PairscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
