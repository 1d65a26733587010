"""End-to-end pipeline stages shared by the CLI and the verification suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import poddesign, sysid
from ._sim import zoh_lsim
from .channel import ChannelConfig
from .config import channel_config, plant_config, prbs_config, scenario_config
from .delaymodel import DelaySurrogate, build_surrogate, expected_delay
from .errors import SysidError
from .refplant import PlantPair, build_reference_plant
from .sysid import IdentifiedPlant

__all__ = [
    "LoopDesign",
    "run_prbs_experiment",
    "identify_path",
    "identify_both",
    "design_surrogate",
    "design_loop",
    "design_both",
]


@dataclass(frozen=True)
class LoopDesign:
    design: poddesign.CompensatorDesign
    context: poddesign.DesignContext
    diagnostics: poddesign.DesignDiagnostics


def run_prbs_experiment(cfg: dict, plant: PlantPair, loop: str) -> tuple[np.ndarray, np.ndarray, float]:
    """PRBS excitation applied at the plant input, upstream of the channel.

    Returns (u, y, sample_rate_hz).
    """
    ident = cfg["identification"]
    fs = ident["sample_rate_hz"]
    u = sysid.gen_prbs(prbs_config(cfg), sample_rate_hz=fs)
    path = plant.p_path if loop == "active" else plant.q_path
    y = zoh_lsim(path, u, 1.0 / fs)
    return u, y, fs


def identify_path(cfg: dict, u: np.ndarray, y: np.ndarray, fs: float) -> IdentifiedPlant:
    ident = cfg["identification"]
    band = tuple(ident["band_hz"])
    pcfg = prbs_config(cfg)
    # segment length = one PRBS period so the Welch estimate is leakage-free;
    # the first period is discarded as settle time so the slowly decaying
    # start-up transient does not bias the estimate near response notches
    period_samples = int(round(pcfg.period_s * fs))
    if len(u) > 3 * period_samples:
        u = u[period_samples:]
        y = y[period_samples:]
    nperseg = min(period_samples, len(u) // 2)
    frf = sysid.estimate_frf(u, y, fs, band, nperseg=nperseg, window="boxcar")
    return sysid.fit_rational(frf, order=ident["fit_order"])


def identify_both(cfg: dict, plant: PlantPair | None = None) -> tuple[IdentifiedPlant, IdentifiedPlant]:
    if plant is None:
        plant = build_reference_plant(plant_config(cfg))
    out = []
    for loop in ("active", "reactive"):
        u, y, fs = run_prbs_experiment(cfg, plant, loop)
        out.append(identify_path(cfg, u, y, fs))
    return tuple(out)


def design_surrogate(cfg: dict) -> DelaySurrogate:
    from .config import delay_distribution

    design = cfg["design"]
    return build_surrogate(
        expected_delay(delay_distribution(cfg)),
        band_hz=tuple(design["band_hz"]),
        max_phase_err_deg=design.get("max_phase_err_deg", 10.0),
        max_order=design.get("max_pade_order", 8),
    )


def design_loop(
    cfg: dict,
    identified: IdentifiedPlant,
    surrogate: DelaySurrogate,
    loop: str,
) -> LoopDesign:
    design_cfg = cfg["design"]
    modes = sysid.find_modes(identified, band_hz=tuple(design_cfg["band_hz"]))
    limits = poddesign.power_limits(poddesign.LimitsInput(**design_cfg["limits"]))
    limit = limits[0] if loop == "active" else limits[1]
    design, ctx, diag = poddesign.design_compensator(
        identified,
        surrogate,
        modes,
        channel_rate_hz=cfg["channel"]["rate_hz"],
        loop=loop,
        washout_Tw_s=design_cfg.get("washout_Tw_s", 5.0),
        limit_pu=limit,
    )
    grid_cfg = design_cfg["gain_grid"]
    K_grid = np.geomspace(grid_cfg["lo"], grid_cfg["hi"], grid_cfg["n"])
    from .lti import to_state_space

    target_hz = tuple(w / (2.0 * math.pi) for w in modes)
    gain = poddesign.select_gain(
        to_state_space(identified.tf), design, surrogate, target_hz, K_grid
    )
    import dataclasses

    design = dataclasses.replace(design, gain=gain)
    return LoopDesign(design=design, context=ctx, diagnostics=diag)


def design_both(
    cfg: dict,
    identified_p: IdentifiedPlant,
    identified_q: IdentifiedPlant,
    surrogate: DelaySurrogate,
) -> tuple[LoopDesign, LoopDesign]:
    return (
        design_loop(cfg, identified_p, surrogate, "active"),
        design_loop(cfg, identified_q, surrogate, "reactive"),
    )
