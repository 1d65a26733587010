"""Command-line front end wiring the design pipeline end-to-end.

Every subcommand reads the JSON config, writes deterministic files into the
output directory, and embeds the config hash and seed in each artifact.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, channel as chan, pipeline, poddesign, simloop, sysid
from .config import (
    channel_config,
    config_hash,
    load_config,
    plant_config,
    scenario_config,
)
from .delaymodel import DelaySurrogate, build_surrogate
from .errors import (
    AnalysisError,
    ChannelError,
    ConfigError,
    DelayModelError,
    DesignError,
    LtiError,
    PlantError,
    PodlabError,
    SimulationError,
    SysidError,
)
from .lti import TransferFunction, series, to_state_space
from .refplant import build_reference_plant
from .sysid import IdentifiedPlant

_MODULE_PREFIX = [
    (ConfigError, "cli"),
    (SimulationError, "simloop"),
    (AnalysisError, "analysis"),
    (DesignError, "poddesign"),
    (SysidError, "sysid"),
    (DelayModelError, "delaymodel"),
    (ChannelError, "channel"),
    (PlantError, "refplant"),
    (LtiError, "lti-core"),
    (PodlabError, "podlab"),
]


def _prefix_for(exc: PodlabError) -> str:
    for cls, name in _MODULE_PREFIX:
        if isinstance(exc, cls):
            return name
    return "podlab"


class _Ctx:
    def __init__(self, args):
        self.cfg = load_config(args.config)
        self.hash = config_hash(self.cfg)
        self.seed = args.seed
        out = args.out or os.environ.get("PODLAB_OUT") or "podlab_out"
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)

    @property
    def channel_seed(self) -> int:
        return self.cfg["channel"]["seed"] if self.seed is None else self.seed

    @property
    def base_seed(self) -> int:
        return self.cfg["simulation"]["base_seed"] if self.seed is None else self.seed

    def write_json(self, name: str, payload: dict, seed=None) -> None:
        payload = {"config_sha256": self.hash, "seed": seed, **payload}
        (self.out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, rows: list[str], seed=None) -> None:
        header = f"# config_sha256={self.hash} seed={seed}"
        (self.out / name).write_text("\n".join([header] + rows) + "\n")

    def read_json(self, name: str) -> dict:
        path = self.out / name
        if not path.exists():
            raise ConfigError(f"required artifact {path} not found; run the earlier stage first")
        return json.loads(path.read_text())


def _identified_from_dict(d: dict) -> IdentifiedPlant:
    from .lti import mode_report

    tf = TransferFunction(d["num"], d["den"])
    modes = tuple(
        mode_report(complex(m["eigenvalue_re"], m["eigenvalue_im"])) for m in d["modes"]
    )
    return IdentifiedPlant(
        tf=tf,
        fit_band_hz=tuple(d["fit_band_hz"]),
        frf_fit_mag_err_db=d["frf_fit_mag_err_db"],
        frf_fit_phase_err_deg=d["frf_fit_phase_err_deg"],
        modes=modes,
    )


def _design_from_dict(d: dict) -> poddesign.CompensatorDesign:
    return poddesign.CompensatorDesign(
        T1_s=d["T1_s"], T2_s=d["T2_s"], T3_s=d["T3_s"], T4_s=d["T4_s"],
        gain=d["gain"], washout_Tw_s=d["washout_Tw_s"],
        limit_pu=d["limit_pu"], loop=d["loop"],
    )


def _surrogate_from_dict(d: dict) -> DelaySurrogate:
    return DelaySurrogate(
        theta_s=d["theta_s"],
        pade=TransferFunction(d["num"], d["den"]),
        order=tuple(d["order"]),
        band_hz=tuple(d["band_hz"]),
        max_phase_err_deg=d["max_phase_err_deg"],
    )


def cmd_plant_build(ctx: _Ctx) -> None:
    plant = build_reference_plant(plant_config(ctx.cfg))
    ctx.write_json(
        "plant.json",
        {
            "true_modes": [
                {"freq_hz": m.freq_hz, "damping_ratio": m.damping_ratio}
                for m in plant.true_modes
            ],
            "order": int(plant.A.shape[0]),
        },
    )


def cmd_channel_measure(ctx: _Ctx) -> None:
    cfg = channel_config(ctx.cfg, seed=ctx.channel_seed)
    n = ctx.cfg["channel"].get("campaign_messages", 1200)
    log = chan.measure_campaign(cfg, n)
    ctx.write_csv("delay_log.csv", log.csv_rows(), seed=ctx.channel_seed)


def cmd_channel_fit(ctx: _Ctx) -> None:
    path = ctx.out / "delay_log.csv"
    if not path.exists():
        raise ConfigError(f"required artifact {path} not found; run 'channel measure' first")
    rows = [r for r in path.read_text().splitlines() if r and not r.startswith("#")]
    delays = np.array(
        [float(r.split(",")[1]) - float(r.split(",")[0]) for r in rows[1:]]
    )
    edges = np.linspace(delays.min(), delays.max() * (1 + 1e-9), 21)
    counts, _ = np.histogram(delays, bins=edges)
    probs = counts / counts.sum()
    probs[int(np.argmax(probs))] += 1.0 - probs.sum()
    dist = chan.DelayDistribution.empirical(edges, probs)
    ctx.write_json(
        "delay_histogram.json",
        {"bin_edges": list(edges), "bin_probs": list(probs), "mean_s": dist.mean_s},
        seed=ctx.channel_seed,
    )
    design = ctx.cfg["design"]
    surrogate = build_surrogate(
        dist.mean_s,
        band_hz=tuple(design["band_hz"]),
        max_phase_err_deg=design.get("max_phase_err_deg", 10.0),
        max_order=design.get("max_pade_order", 8),
    )
    ctx.write_json("delay_surrogate.json", surrogate.to_dict(), seed=ctx.channel_seed)


def cmd_sysid_prbs(ctx: _Ctx) -> None:
    plant = build_reference_plant(plant_config(ctx.cfg))
    for loop, tag in (("active", "p"), ("reactive", "q")):
        u, y, fs = pipeline.run_prbs_experiment(ctx.cfg, plant, loop)
        rows = ["t_s,u_pu,y_pu"]
        rows.extend(f"{k / fs:.9g},{u[k]:.9g},{y[k]:.9g}" for k in range(len(u)))
        ctx.write_csv(f"experiment_{tag}.csv", rows)


def cmd_sysid_fit(ctx: _Ctx) -> None:
    fs = ctx.cfg["identification"]["sample_rate_hz"]
    for tag in ("p", "q"):
        path = ctx.out / f"experiment_{tag}.csv"
        if not path.exists():
            raise ConfigError(f"required artifact {path} not found; run 'sysid prbs' first")
        rows = [r for r in path.read_text().splitlines() if r and not r.startswith("#")]
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        ident = pipeline.identify_path(ctx.cfg, data[:, 1], data[:, 2], fs)
        ctx.write_json(f"identified_{tag}.json", ident.to_dict())


def cmd_design_run(ctx: _Ctx) -> None:
    identified_p = _identified_from_dict(ctx.read_json("identified_p.json"))
    identified_q = _identified_from_dict(ctx.read_json("identified_q.json"))
    surrogate_path = ctx.out / "delay_surrogate.json"
    if surrogate_path.exists():
        surrogate = _surrogate_from_dict(json.loads(surrogate_path.read_text()))
    else:
        surrogate = pipeline.design_surrogate(ctx.cfg)
    for tag, identified in (("p", identified_p), ("q", identified_q)):
        loop = "active" if tag == "p" else "reactive"
        result = pipeline.design_loop(ctx.cfg, identified, surrogate, loop)
        budget = result.diagnostics.budget
        ctx.write_json(
            f"design_{tag}.json",
            {
                **result.design.to_dict(),
                "phase_budget": {
                    "phi_P_deg": list(budget.phi_P_deg),
                    "phi_D_deg": list(budget.phi_D_deg),
                    "phi_C_deg": list(budget.phi_C_deg),
                    "phi_G_deg": list(budget.phi_G_deg),
                },
                "residual_norms": list(result.diagnostics.residual_norms),
                "converged": list(result.diagnostics.converged),
                "selected_start": result.diagnostics.selected_start,
                "fnorm": result.diagnostics.fnorm,
                "fnorm_inf": result.diagnostics.fnorm_inf,
                "mode_omegas_rad_s": list(result.context.omegas),
            },
        )


def _load_design_stage(ctx: _Ctx):
    identified_p = _identified_from_dict(ctx.read_json("identified_p.json"))
    identified_q = _identified_from_dict(ctx.read_json("identified_q.json"))
    dp_dict = ctx.read_json("design_p.json")
    dq_dict = ctx.read_json("design_q.json")
    design_p = _design_from_dict(dp_dict)
    design_q = _design_from_dict(dq_dict)
    surrogate_path = ctx.out / "delay_surrogate.json"
    if surrogate_path.exists():
        surrogate = _surrogate_from_dict(json.loads(surrogate_path.read_text()))
    else:
        surrogate = pipeline.design_surrogate(ctx.cfg)
    modes_hz = tuple(w / (2.0 * math.pi) for w in dp_dict["mode_omegas_rad_s"])
    return identified_p, identified_q, design_p, design_q, surrogate, modes_hz


def cmd_analyze_bode(ctx: _Ctx) -> None:
    identified_p, identified_q, design_p, design_q, surrogate, _ = _load_design_stage(ctx)
    band = tuple(ctx.cfg["design"]["band_hz"])
    for tag, identified, design in (
        ("p", identified_p, design_p),
        ("q", identified_q, design_q),
    ):
        plant_delay = series(surrogate.pade, identified.tf)
        g = analysis.open_loop(
            design.compensator_tf(), design.washout_tf(), design.gain,
            surrogate.pade, identified.tf,
        )
        ctx.write_csv(f"bode_plant_delay_{tag}.csv", analysis.bode_table(plant_delay, band, 200))
        ctx.write_csv(f"bode_open_loop_{tag}.csv", analysis.bode_table(g, band, 200))


def cmd_analyze_eig(ctx: _Ctx) -> None:
    identified_p, identified_q, design_p, design_q, surrogate, modes_hz = _load_design_stage(ctx)
    study_p = analysis.delay_sweep(
        to_state_space(identified_p.tf), design_p, surrogate, modes_hz
    )
    study_q = analysis.delay_sweep(
        to_state_space(identified_q.tf), design_q, surrogate, modes_hz
    )
    plant = build_reference_plant(plant_config(ctx.cfg))
    combined = analysis.closed_loop_modes_two(
        plant.A, plant.B_p, plant.B_q, plant.C, design_p, design_q,
        surrogate, modes_hz, label="both loops, reference plant",
    )
    ctx.write_json(
        "eigen_study.json",
        {
            "p_loop": study_p.to_dict(),
            "q_loop": study_q.to_dict(),
            "combined": {
                "label": combined.label,
                "stable": combined.stable,
                "target_modes": [
                    {"freq_hz": m.freq_hz, "damping_ratio": m.damping_ratio}
                    for m in combined.target_modes
                ],
            },
        },
    )


def cmd_sim_run(ctx: _Ctx) -> None:
    _, _, design_p, design_q, _, _ = _load_design_stage(ctx)
    plant = build_reference_plant(plant_config(ctx.cfg))
    sim = ctx.cfg["simulation"]
    trace = simloop.run_closed_loop(
        plant, design_p, design_q,
        channel_config(ctx.cfg, seed=ctx.channel_seed),
        scenario_config(ctx.cfg),
        seed=ctx.base_seed,
        pod_on=True,
        duration_s=sim["duration_s"],
        dt=sim["dt_s"],
    )
    ctx.write_csv("trace.csv", trace.csv_rows(), seed=ctx.base_seed)


def cmd_sim_ensemble(ctx: _Ctx) -> None:
    _, _, design_p, design_q, _, _ = _load_design_stage(ctx)
    plant = build_reference_plant(plant_config(ctx.cfg))
    sim = ctx.cfg["simulation"]
    stats = simloop.ensemble(
        sim["n_runs"],
        ctx.base_seed,
        plant,
        design_p,
        design_q,
        channel_config(ctx.cfg, seed=ctx.channel_seed),
        scenario_config(ctx.cfg),
        metric_window=tuple(sim["metric_window_s"]),
        duration_s=sim["duration_s"],
        dt=sim["dt_s"],
    )
    ctx.write_json("ensemble.json", stats.to_dict(), seed=ctx.base_seed)


_COMMANDS = {
    ("plant", "build"): cmd_plant_build,
    ("channel", "measure"): cmd_channel_measure,
    ("channel", "fit"): cmd_channel_fit,
    ("sysid", "prbs"): cmd_sysid_prbs,
    ("sysid", "fit"): cmd_sysid_fit,
    ("design", "run"): cmd_design_run,
    ("analyze", "bode"): cmd_analyze_bode,
    ("analyze", "eig"): cmd_analyze_eig,
    ("sim", "run"): cmd_sim_run,
    ("sim", "ensemble"): cmd_sim_ensemble,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="podlab",
        description="POD controller design laboratory with communication-channel emulation",
    )
    sub = parser.add_subparsers(dest="group", required=True)
    groups = {
        "plant": ["build"],
        "channel": ["measure", "fit"],
        "sysid": ["prbs", "fit"],
        "design": ["run"],
        "analyze": ["bode", "eig"],
        "sim": ["run", "ensemble"],
    }
    for group, actions in groups.items():
        gp = sub.add_parser(group)
        gs = gp.add_subparsers(dest="action", required=True)
        for action in actions:
            ap = gs.add_parser(action)
            ap.add_argument("--config", required=True, help="path to the JSON config file")
            ap.add_argument("--out", default=None, help="output directory (default $PODLAB_OUT)")
            ap.add_argument("--seed", type=int, default=None, help="override config seeds")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ctx = _Ctx(args)
        _COMMANDS[(args.group, args.action)](ctx)
    except PodlabError as exc:
        print(f"{_prefix_for(exc)}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
