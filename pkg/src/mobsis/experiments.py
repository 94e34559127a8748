"""JSON experiment configuration and the command implementations behind the CLI.

Each command is a pure function of the resolved configuration (seed
included) and writes deterministic CSV artifacts into the output directory.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .control import ControlSignal
from .ctmc import EmpiricalState, SimConfig, monte_carlo, simulate
from .model import (
    FluidState,
    ModelParams,
    endemic_equilibrium,
    reduced_rhs,
    sustain_margin,
    sustain_verdict,
    xstar_all,
)
from .ode import Trajectory, integrate
from .optimal import costate_diagnostics, optimize_threshold


class ConfigError(ValueError):
    pass


def _strict(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return cls(**data)


@dataclass
class ModelBlock:
    m: list = field(default_factory=lambda: [0.4, 0.3, 0.3])
    gamma: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    nu: list = field(default_factory=lambda: [8.0, 8.0])
    mu: list = field(default_factory=lambda: [2.0, 2.0, 2.0])
    epsilon: float = 0.02
    T: float = 5.0
    normalize: bool = False


@dataclass
class InitBlock:
    x0: float = 0.1
    # fast fractions; None means the quasi-static equilibrium for u(0)
    x: Optional[list] = None


@dataclass
class ControlBlock:
    type: str = "constant"
    u: float = 1.0
    tau: Optional[float] = None
    breakpoints: Optional[list] = None
    values: Optional[list] = None
    period: Optional[float] = None
    duty: Optional[float] = None


@dataclass
class SimBlock:
    n: int = 1000
    sizes: Optional[list] = None
    seed: int = 0
    replications: int = 50


@dataclass
class OdeBlock:
    tol: float = 1e-8
    record_points: int = 1001


@dataclass
class StudyBlock:
    variable: Optional[str] = None
    values: Optional[list] = None
    coupled_epsilon: Optional[float] = None
    delta_factor: float = 10.0
    grid_size: int = 512
    refine_tol: float = 1e-9
    root_grid: int = 10_000
    x0_grid: int = 401
    square_period: float = 0.02
    objective: str = "campaign"


SWEEP_VARIABLES = {"n", "epsilon"}
SYSTEMS = {"full", "reduced", "artificial", "ctmc"}
CONTROL_TYPES = {"constant", "threshold", "breakpoints", "square_wave"}


@dataclass
class ExperimentConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    system: str = "reduced"
    init: InitBlock = field(default_factory=InitBlock)
    control: ControlBlock = field(default_factory=ControlBlock)
    sim: SimBlock = field(default_factory=SimBlock)
    ode: OdeBlock = field(default_factory=OdeBlock)
    study: StudyBlock = field(default_factory=StudyBlock)
    output: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown top-level keys {unknown}")
        cfg = cls(
            model=_strict(ModelBlock, data.get("model"), "model"),
            system=data.get("system", "reduced"),
            init=_strict(InitBlock, data.get("init"), "init"),
            control=_strict(ControlBlock, data.get("control"), "control"),
            sim=_strict(SimBlock, data.get("sim"), "sim"),
            ode=_strict(OdeBlock, data.get("ode"), "ode"),
            study=_strict(StudyBlock, data.get("study"), "study"),
            output=data.get("output"),
        )
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def check(self) -> None:
        problems = self.params().validate()
        if problems:
            raise ConfigError("model: " + "; ".join(problems))
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {sorted(SYSTEMS)}")
        if self.control.type not in CONTROL_TYPES:
            raise ConfigError(f"control.type must be one of {sorted(CONTROL_TYPES)}")
        if self.study.variable is not None and self.study.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"study.variable must be one of {sorted(SWEEP_VARIABLES)}")
        if self.sim.replications < 1:
            raise ConfigError("sim.replications must be >= 1")
        if not 0 <= self.sim.seed < 2**64:
            raise ConfigError("sim.seed must be an unsigned 64-bit integer")
        m0 = self.model.m[0] if self.model.m else 0
        if not 0 <= self.init.x0 <= m0:
            raise ConfigError("init.x0 must lie in [0, m0]")
        try:
            self.control_signal()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"control: {exc}") from exc

    # resolved objects

    def params(self, **overrides) -> ModelParams:
        blk = self.model
        p = ModelParams(blk.m, blk.gamma, blk.nu, blk.mu, blk.epsilon, blk.T)
        if blk.normalize:
            p = p.normalized()
        return p.replace(**overrides) if overrides else p

    def control_signal(self, T: Optional[float] = None) -> ControlSignal:
        c = self.control
        T = self.model.T if T is None else T
        if c.type == "constant":
            return ControlSignal.constant(c.u, T)
        if c.type == "threshold":
            if c.tau is None:
                raise ValueError("threshold control needs tau")
            return ControlSignal.threshold(c.tau, T)
        if c.type == "breakpoints":
            return ControlSignal(c.breakpoints, c.values, T)
        if c.period is None or c.duty is None:
            raise ValueError("square_wave control needs period and duty")
        return ControlSignal.square_wave(c.period, c.duty, T)

    def fluid_init(self, params: ModelParams, control: ControlSignal) -> FluidState:
        if self.init.x is not None:
            return FluidState(self.init.x0, self.init.x)
        return FluidState(self.init.x0, xstar_all(params, self.init.x0 * control(0.0)))

    def empirical_init(self, params: ModelParams, control: ControlSignal, n: Optional[int] = None) -> EmpiricalState:
        fl = self.fluid_init(params, control).as_array()
        if self.sim.sizes is not None and n is None:
            M = np.asarray(self.sim.sizes, dtype=np.int64)
            X = np.clip(np.rint(fl * M.sum()).astype(np.int64), 0, M)
            return EmpiricalState(X, M)
        return EmpiricalState.from_fractions(params.m, fl, n or self.sim.n)


# CSV output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: Path, header, rows, cfg: ExperimentConfig, command: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# command={command} config_sha256={cfg.digest()} seed={cfg.sim.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_trajectory(path: Path, traj: Trajectory, cfg, command) -> Path:
    return write_csv(path, traj.csv_header(), traj.csv_rows(), cfg, command)


def _prepare_out(out: Optional[Path], cfg: ExperimentConfig) -> Optional[Path]:
    if out is None:
        return None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return out


# commands


def cmd_check_sustain(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    params = cfg.params()
    margin = sustain_margin(params)
    xbar = endemic_equilibrium(params, grid_points=cfg.study.root_grid)
    report = {"margin": margin, "verdict": sustain_verdict(params), "endemic_equilibrium": xbar}
    out = _prepare_out(out, cfg)
    if out is not None:
        row = [margin, report["verdict"], "" if xbar is None else xbar]
        write_csv(out / "sustain.csv", ["margin", "verdict", "endemic_equilibrium"], [row], cfg, "check-sustain")
    return report


def _bisect(f, lo, hi, xtol=1e-13):
    flo = f(lo)
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _pos_to_neg(vals):
    return np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))


def cmd_fig1(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    params = cfg.params()
    m0, g0, mu0 = params.m[0], params.gamma[0], params.mu[0]
    x0 = np.linspace(0.0, m0, cfg.study.x0_grid)
    with_net = reduced_rhs(params, x0, 1.0)
    without = -mu0 * x0 + (m0 - x0) * g0 * x0
    cw, cn = _pos_to_neg(with_net), _pos_to_neg(without)
    crossings = [
        _bisect(lambda x: reduced_rhs(params, x, 1.0), x0[i], x0[i + 1]) for i in cw
    ]
    mark_w = np.zeros(x0.size, dtype=int)
    mark_w[cw] = 1
    mark_n = np.zeros(x0.size, dtype=int)
    mark_n[cn] = 1
    out = _prepare_out(out, cfg)
    if out is not None:
        write_csv(
            out / "fig1.csv",
            ["x0", "f_with_network", "f_without_network", "crossing_with", "crossing_without"],
            zip(x0, with_net, without, mark_w, mark_n),
            cfg,
            "fig1",
        )
    return {
        "x0": x0,
        "f_with_network": with_net,
        "f_without_network": without,
        "crossings_with": crossings,
        "crossings_without": int(cn.size),
    }


def cmd_integrate(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    params = cfg.params()
    control = cfg.control_signal()
    system = "full" if cfg.system == "ctmc" else cfg.system
    init = cfg.fluid_init(params, control)
    traj = integrate(system, params, init, control, cfg.ode.tol, record=cfg.ode.record_points)
    out = _prepare_out(out, cfg)
    if out is not None:
        write_trajectory(out / "trajectory.csv", traj, cfg, "integrate")
    return {"trajectory": traj, "terminal_x0": traj.terminal_x0, "control_cost": traj.running_cost[-1]}


def cmd_simulate(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    params = cfg.params()
    control = cfg.control_signal()
    init = cfg.empirical_init(params, control)
    sim_cfg = SimConfig(seed=cfg.sim.seed, record=cfg.ode.record_points)
    traj = simulate(params, init, control, sim_cfg)
    out = _prepare_out(out, cfg)
    report = {"trajectory": traj, "extinct": traj.extinct, "counters": traj.counters.tolist()}
    if out is not None:
        write_trajectory(out / "trajectory.csv", traj, cfg, "simulate")
        if cfg.sim.replications > 1:
            summary = monte_carlo(params, init, control, sim_cfg, cfg.sim.replications, jobs=jobs)
            K = params.K
            header = ["t"] + [f"mean_x{k}" for k in range(K + 1)] + [
                f"q{int(q * 100):02d}_x0" for q in sorted(summary.quantiles)
            ]
            rows = (
                [t, *summary.mean[i], *(summary.quantiles[q][i, 0] for q in sorted(summary.quantiles))]
                for i, t in enumerate(summary.times)
            )
            write_csv(out / "ensemble.csv", header, rows, cfg, "simulate")
            report["extinction_frequency"] = summary.extinction_frequency
    return report


def cmd_convergence_n(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    study = cfg.study
    if study.variable not in (None, "n"):
        raise ConfigError("convergence-n sweeps study.variable = 'n'")
    ns = study.values or [500, 2000, 8000]
    control = cfg.control_signal()
    rows = []
    for n in ns:
        n = int(n)
        eps = study.coupled_epsilon / math.log(n) if study.coupled_epsilon else cfg.model.epsilon
        params = cfg.params(epsilon=eps)
        init = cfg.empirical_init(params, control, n=n)
        # the fluid reference starts from the same empirical point and uses the realized sizes
        ref_params = params.replace(m=init.M / init.n)
        ref = integrate("full", ref_params, FluidState.from_array(init.fractions()), control,
                        cfg.ode.tol, record=cfg.ode.record_points)
        summary = monte_carlo(params, init, control, SimConfig(seed=cfg.sim.seed, record=cfg.ode.record_points),
                              cfg.sim.replications, reference=ref, jobs=jobs)
        q25, q50, q75 = summary.sup_error_quantiles((0.25, 0.5, 0.75))
        rows.append([n, q50, q25, q75, eps])
    out = _prepare_out(out, cfg)
    if out is not None:
        write_csv(out / "convergence_n.csv", ["n", "median_sup_error", "q25", "q75", "epsilon"], rows, cfg,
                  "convergence-n")
    return {"rows": rows}


def cmd_epsilon_scaling(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    study = cfg.study
    if study.variable not in (None, "epsilon"):
        raise ConfigError("epsilon-scaling sweeps study.variable = 'epsilon'")
    eps_values = study.values or [0.1, 0.05, 0.025, 0.0125]
    control = cfg.control_signal()
    rows = []
    for eps in eps_values:
        params = cfg.params(epsilon=float(eps))
        init = cfg.fluid_init(params, control)
        full = integrate("full", params, init, control, cfg.ode.tol, record=cfg.ode.record_points)
        red = integrate("reduced", params, init, control, cfg.ode.tol, record=cfg.ode.record_points)
        delta = study.delta_factor * eps
        rows.append([
            float(eps),
            full.sup_distance(red, t_min=delta, slow_only=True),
            full.sup_distance(red, slow_only=True),
            delta,
        ])
    arr = np.array(rows)
    slope = float(np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)[0])
    out = _prepare_out(out, cfg)
    if out is not None:
        write_csv(out / "epsilon_scaling.csv",
                  ["epsilon", "sup_error_vs_reduced", "sup_error_full_range", "delta"], rows, cfg,
                  "epsilon-scaling")
    return {"rows": rows, "slope": slope}


def cmd_optimize(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    params = cfg.params()
    study = cfg.study
    res = optimize_threshold(params, cfg.init.x0, grid_size=study.grid_size, refine_tol=study.refine_tol,
                             objective=study.objective)
    diag = costate_diagnostics(params, cfg.init.x0, res.tau, n_grid=cfg.ode.record_points)
    T = params.T
    out = _prepare_out(out, cfg)
    if out is not None:
        ctrl_costs = T - res.taus
        # campaign: J = (T - tau) - x0(T); disease: J = tau + x0(T)
        terminal = ctrl_costs - res.costs if study.objective == "campaign" else res.costs - res.taus
        write_csv(out / "sweep.csv", ["tau", "J", "control_cost", "terminal_x0"],
                  zip(res.taus, res.costs, ctrl_costs, terminal), cfg, "optimize")
        c = res.cost
        write_csv(out / "optimum.csv", ["tau", "J", "control_cost", "terminal_x0"],
                  [[res.tau, c.total, c.control_cost, c.terminal_value]], cfg, "optimize")
        write_csv(out / "costate.csv", ["t", "p", "phi", "H"], zip(diag.times, diag.p, diag.phi, diag.H), cfg,
                  "optimize")
        write_csv(out / "lie_bracket.csv", ["x0", "bracket"], zip(diag.bracket_x, diag.bracket), cfg, "optimize")
    return {"tau": res.tau, "cost": res.cost, "search": res, "diagnostics": diag}


def cmd_fig4(cfg: ExperimentConfig, out=None, jobs: int = 1) -> dict:
    params = cfg.params()
    T = params.T
    if cfg.control.type == "threshold":
        tau = float(cfg.control.tau)
    else:
        tau = optimize_threshold(params, cfg.init.x0, grid_size=cfg.study.grid_size,
                                 refine_tol=cfg.study.refine_tol).tau
    threshold = ControlSignal.threshold(tau, T)
    duty = (T - tau) / T
    square = ControlSignal.square_wave(cfg.study.square_period, duty, T)
    tol, rec = cfg.ode.tol, cfg.ode.record_points
    tr_thr = integrate("reduced", params, cfg.init.x0, threshold, tol, record=rec)
    tr_sq = integrate("reduced", params, cfg.init.x0, square, tol, record=rec)

    ensembles = {}
    for name, ctrl in (("threshold", threshold), ("square_wave", square)):
        init = cfg.empirical_init(params, ctrl)
        summary = monte_carlo(params, init, ctrl, SimConfig(seed=cfg.sim.seed, record=rec),
                              cfg.sim.replications, jobs=jobs)
        ensembles[name] = summary
    out = _prepare_out(out, cfg)
    if out is not None:
        write_csv(out / "fig4.csv", ["t", "x0_threshold", "x0_square_wave", "u_threshold", "u_square_wave"],
                  zip(tr_thr.times, tr_thr.x0, tr_sq.x0, tr_thr.controls, tr_sq.controls), cfg, "fig4")
        write_csv(
            out / "fig4_extinction.csv",
            ["policy", "control_cost", "extinction_frequency", "mean_terminal_x0", "replications"],
            [[name, ctrl.integral(), s.extinction_frequency, s.mean[-1, 0], s.replications]
             for (name, s), ctrl in zip(ensembles.items(), (threshold, square))],
            cfg, "fig4",
        )
    return {
        "tau": tau,
        "duty": duty,
        "control_cost": {"threshold": threshold.integral(), "square_wave": square.integral()},
        "min_x0": {"threshold": float(tr_thr.x0.min()), "square_wave": float(tr_sq.x0.min())},
        "trajectories": {"threshold": tr_thr, "square_wave": tr_sq},
        "extinction_frequency": {k: v.extinction_frequency for k, v in ensembles.items()},
    }


COMMANDS = {
    "check-sustain": cmd_check_sustain,
    "fig1": cmd_fig1,
    "simulate": cmd_simulate,
    "integrate": cmd_integrate,
    "convergence-n": cmd_convergence_n,
    "epsilon-scaling": cmd_epsilon_scaling,
    "optimize": cmd_optimize,
    "fig4": cmd_fig4,
}
