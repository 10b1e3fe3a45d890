"""
Closed-loop scenario runner.

A scenario simulates the kite at 200 Hz, synthesizes the sensor suite, runs
the estimators causally at 10 Hz and compares their output against the truth.
Scenarios are JSON documents; results are a CSV time series (one row per
navigation cycle) and a JSON report of error metrics.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .dynamics import (
    FigureEightConfig,
    KiteState,
    ModelParams,
    PoleSingularity,
    equilibrium_vartheta,
    pose_trajectory,
    simulate,
)
from .geometry import (
    DegenerateOrientation,
    GravityAngles,
    gravity_angles_from_rotation,
    gravity_to_wind,
    wrap_angle,
)
from .sensors import (
    DECIMATION,
    ImuErrorModel,
    ImuSample,
    ShipWind,
    TowpointDisturbance,
    decimate_20,
    synthesize_airspeed,
    synthesize_imu_200hz,
    synthesize_towpoint,
)
from .windref import (
    CombinedConfig,
    WindRefConfig,
    WindRefState,
    combined_init,
    combined_step,
    compute_nav_output,
    compute_phi_r,
    reference_step,
)
from .yae import YaeConfig, YaeDiagnostics, yae_init, yae_step

SCHEMA_VERSION = 1
TRUTH_DT = 0.005
NAV_DT = TRUTH_DT * DECIMATION


class ConfigInvalid(ValueError):
    pass


class SingularityAbort(RuntimeError):
    pass


class TooFewSamples(ValueError):
    pass


# --- configuration ---------------------------------------------------------


@dataclass
class TowpointConfig:
    disturbance_amplitude: float = 0.0
    disturbance_period: float = 8.0
    sigma: float = 0.0


@dataclass
class YaeSettings:
    cutoff_hz: float = 0.01
    gamma: float = 0.003
    r_r_gain: float = 1.0


@dataclass
class CombinedSettings:
    enabled: bool = False
    k_a: float = 1.0
    k_w: float = 0.2
    k_b: float = 0.01


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce a run.

    Angles are in rad, rates in rad/s.  ``phi_w = pi`` means the apparent
    wind blows along ``+e_x`` of the ship frame.  ``steer_start`` holds the kite
    at rest in the wind window centre before the figure-eight begins, so the
    estimator levels on pure gravity.  ``phi_g_drift`` adds a ramp to the
    estimator azimuth before wind referencing and ``phi_w_sensor_offset`` adds
    a constant error to the reported ship wind direction only.  With
    ``truth_fed`` the estimator outputs are replaced by the true angles.
    """

    schema_version: int = SCHEMA_VERSION
    duration: float = 600.0
    transient: float = 60.0
    steer_start: float = 10.0
    seed: int = 0
    model: ModelParams = field(default_factory=ModelParams)
    figure_eight: FigureEightConfig = field(default_factory=FigureEightConfig)
    imu_error: ImuErrorModel = field(default_factory=ImuErrorModel)
    ship: ShipWind = field(default_factory=ShipWind)
    towpoint: TowpointConfig = field(default_factory=TowpointConfig)
    airspeed_sigma: float = 0.0
    yae: YaeSettings = field(default_factory=YaeSettings)
    windref_tau: float = 100.0
    combined: CombinedSettings = field(default_factory=CombinedSettings)
    phi_g_drift: float = 0.0
    phi_w_sensor_offset: float = 0.0
    truth_fed: bool = False

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigInvalid(f"unsupported schema_version {self.schema_version}")
        if not self.duration > 0:
            raise ConfigInvalid("duration must be positive")
        if abs(self.duration / NAV_DT - round(self.duration / NAV_DT)) > 1e-6:
            raise ConfigInvalid(f"duration must be a multiple of {NAV_DT} s")
        if self.transient < 0 or self.steer_start < 0:
            raise ConfigInvalid("transient and steer_start must be non-negative")
        if self.towpoint.disturbance_period <= 0:
            raise ConfigInvalid("disturbance_period must be positive")
        if self.towpoint.sigma < 0 or self.airspeed_sigma < 0:
            raise ConfigInvalid("noise sigmas must be non-negative")
        try:
            self.yae_config()
            WindRefConfig(tau=self.windref_tau, dt=NAV_DT)
            self.combined_config()
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def yae_config(self) -> YaeConfig:
        return YaeConfig(dt=NAV_DT, cutoff_hz=self.yae.cutoff_hz, gamma=self.yae.gamma, r_r_gain=self.yae.r_r_gain)

    def combined_config(self) -> CombinedConfig:
        c = self.combined
        return CombinedConfig(k_a=c.k_a, k_w=c.k_w, k_b=c.k_b, dt=NAV_DT, cutoff_hz=self.yae.cutoff_hz)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        try:
            return _build(cls, d)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from exc


_NESTED = {
    "model": ModelParams,
    "figure_eight": FigureEightConfig,
    "imu_error": ImuErrorModel,
    "ship": ShipWind,
    "towpoint": TowpointConfig,
    "yae": YaeSettings,
    "combined": CombinedSettings,
}


def _build(cls, d: dict[str, Any]):
    if not isinstance(d, dict):
        raise ConfigInvalid(f"expected an object for {cls.__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigInvalid(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        if cls is ScenarioConfig and k in _NESTED:
            v = _build(_NESTED[k], v)
        elif k in ("gyro_bias", "accel_bias"):
            v = tuple(float(x) for x in v)
            if len(v) != 3:
                raise ConfigInvalid(f"{k} needs three components")
        kwargs[k] = v
    return cls(**kwargs)


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    cfg = ScenarioConfig.from_dict(data)
    cfg.validate()
    return cfg


def default_config_json() -> str:
    return json.dumps(ScenarioConfig().to_dict(), indent=2) + "\n"


# --- CSV schema --------------------------------------------------------------


def _xyz(name: str) -> list[str]:
    return [f"{name}_x", f"{name}_y", f"{name}_z"]


CSV_COLUMNS: list[str] = (
    ["t", "truth_varphi", "truth_vartheta", "truth_psi"]
    + _xyz("omega_s")
    + _xyz("a_s")
    + ["phi_s", "theta_s", "phi_w", "v_a", "L"]
    + ["phi_g", "theta_g", "psi_g"]
    + [c for name in YaeDiagnostics.FIELDS for c in _xyz(name)]
    + _xyz("omega_0")
    + ["phi_gr", "psi_m", "varphi_m", "vartheta_m"]
    + ["comb_phi_g", "comb_theta_g", "comb_psi_g"]
)


def write_csv(columns: dict[str, NDArray], out) -> None:
    """Write the run table; ``out`` is a path or a text stream."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_csv(columns, fh)
        return
    data = np.column_stack([np.asarray(columns[c], dtype=float) for c in CSV_COLUMNS])
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in data:
        w.writerow([repr(float(x)) for x in row])


def read_csv(path) -> dict[str, NDArray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(x) for x in row] for row in r], dtype=float)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


# --- checks ----------------------------------------------------------------


def check_eq9_consistency(rows: dict[str, NDArray], L: float | None = None, source: str = "measured") -> float:
    """Correlation between both sides of the azimuth equation of motion.

    Compares ``sin(psi)`` against ``-L sin(vartheta) dvarphi/dt / v_a`` with a
    central-difference derivative.  ``source="truth"`` uses the true wind
    angles instead of the measured ones.  ``L`` defaults to the line length
    column.
    """
    if len(rows["t"]) < 100:
        raise TooFewSamples("need at least 100 rows")
    prefix = {"measured": ("psi_m", "vartheta_m", "varphi_m"), "truth": ("truth_psi", "truth_vartheta", "truth_varphi")}
    psi_c, vt_c, vp_c = prefix[source]
    if L is None:
        L = rows["L"]
    t = np.asarray(rows["t"])
    varphi = np.unwrap(np.asarray(rows[vp_c]))
    dvarphi = np.gradient(varphi, t)
    a = np.sin(rows[psi_c])
    b = -L * np.sin(rows[vt_c]) * dvarphi / rows["v_a"]
    return float(np.corrcoef(a, b)[0, 1])


def check_fig7_consistency(rows: dict[str, NDArray], transient: float = 60.0) -> tuple[float, float]:
    """RMS [deg] of ``phi_gr`` against ``phi_s + pi - phi_w`` and of ``theta_g`` against ``theta_s``."""
    m = np.asarray(rows["t"]) >= rows["t"][0] + transient
    if m.sum() < 2:
        raise TooFewSamples("no rows after the transient")
    phi_r = wrap_angle(rows["phi_s"][m] + math.pi - rows["phi_w"][m])
    e_phi = wrap_angle(rows["phi_gr"][m] - phi_r)
    e_theta = rows["theta_g"][m] - rows["theta_s"][m]
    return _rms_deg(e_phi), _rms_deg(e_theta)


def _rms_deg(e) -> float:
    e = np.asarray(e, dtype=float)
    return float(np.degrees(np.sqrt(np.mean(e * e))))


# --- runner ----------------------------------------------------------------


@dataclass
class RunReport:
    duration: float
    transient: float
    rows: int
    rms_phi_g_deg: float
    rms_theta_g_deg: float
    rms_psi_g_deg: float
    rms_phi_gr_deg: float
    rms_psi_m_deg: float
    max_abs_phi_gr_error_deg: float
    fig7_rms_phi_deg: float
    fig7_rms_theta_deg: float
    eq9_correlation: float
    bias_injected_deg_s: list[float]
    bias_final_deg_s: list[float]
    bias_tail_mean_deg_s: list[float]
    bias_final_error_deg_s: list[float]
    bias_tail_mean_error_deg_s: list[float]
    combined_rms_deg: list[float] | None
    combined_rms_psi_deg: float | None
    runtime_s: float

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class RunResult:
    columns: dict[str, NDArray]
    report: RunReport

    def csv_text(self) -> str:
        buf = io.StringIO()
        write_csv(self.columns, buf)
        return buf.getvalue()


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Run one scenario end to end.

    Raises
    ------
    ConfigInvalid
        If the configuration does not validate.
    SingularityAbort
        If the truth model hits a pole or the navigation output degenerates.
    """
    cfg.validate()
    t0 = time.perf_counter()
    p = cfg.model

    initial = KiteState(0.0, equilibrium_vartheta(p.E), 0.0, 0.0)
    try:
        hist = simulate(p, cfg.figure_eight, cfg.duration, initial, TRUTH_DT, cfg.steer_start)
    except PoleSingularity as exc:
        raise SingularityAbort(str(exc)) from exc
    truth = pose_trajectory(hist, p)
    imu = decimate_20(synthesize_imu_200hz(truth, cfg.imu_error))
    n = len(imu)
    idx = DECIMATION * (np.arange(n) + 1)
    t = hist.t[idx]

    ship_sensor = ShipWind(cfg.ship.v_w, cfg.ship.phi_w + cfg.phi_w_sensor_offset)
    dist = TowpointDisturbance(cfg.towpoint.disturbance_amplitude, cfg.towpoint.disturbance_period)
    tow = synthesize_towpoint(t, truth.position[idx], cfg.ship, dist, cfg.towpoint.sigma, cfg.seed + 1)
    air = synthesize_airspeed(t, p.v_a, cfg.airspeed_sigma, cfg.seed + 2)

    true_g = gravity_angles_from_rotation(truth.R[idx])
    true_psi = hist.psi[idx]

    cols = {c: np.full(n, np.nan) for c in CSV_COLUMNS}
    cols["t"] = t
    cols["truth_varphi"] = hist.varphi[idx]
    cols["truth_vartheta"] = hist.vartheta[idx]
    cols["truth_psi"] = true_psi
    for i, ax in enumerate("xyz"):
        cols[f"omega_s_{ax}"] = imu.omega_s[:, i]
        cols[f"a_s_{ax}"] = imu.a_s[:, i]
    cols["phi_s"] = tow.phi_s
    cols["theta_s"] = tow.theta_s
    cols["phi_w"] = np.full(n, ship_sensor.phi_w)
    cols["v_a"] = air.v_a
    cols["L"] = np.full(n, p.L)

    ycfg = cfg.yae_config()
    lp = ycfg.lowpass
    wcfg = WindRefConfig(tau=cfg.windref_tau, dt=NAV_DT)
    est = np.empty((n, 3))
    diag = {name: np.empty((n, 3)) for name in YaeDiagnostics.FIELDS}
    omega_0 = np.empty((n, 3))
    nav = np.empty((n, 4))

    state = yae_init(imu.a_s[0], ycfg)
    ref = WindRefState()
    comb_on = cfg.combined.enabled
    if comb_on:
        ccfg = cfg.combined_config()
        phi_r0 = compute_phi_r(tow.phi_s[0], ship_sensor)
        comb = combined_init(imu.a_s[0], phi_r0, ccfg)
        comb_out = np.empty((n, 3))

    try:
        for k in range(n):
            sample = ImuSample(imu.omega_s[k], imu.a_s[k], float(imu.t[k]))
            state, ang, d = yae_step(state, sample, ycfg, lp)
            if cfg.truth_fed:
                phi_g, theta_g, psi_g = true_g.phi[k], true_g.theta[k], true_g.psi_g[k]
            else:
                phi_g, theta_g, psi_g = ang.phi, ang.theta, ang.psi_g
            phi_g = wrap_angle(phi_g + cfg.phi_g_drift * (t[k] - t[0]))
            est[k] = (phi_g, theta_g, psi_g)
            for name in YaeDiagnostics.FIELDS:
                diag[name][k] = getattr(d, name)
            omega_0[k] = state.omega_0

            phi_r = compute_phi_r(tow.phi_s[k], ship_sensor)
            ref, phi_gr = reference_step(ref, phi_g, phi_r, wcfg)
            out = compute_nav_output(phi_gr, theta_g, psi_g)
            nav[k] = (out.phi_gr, out.psi_m, out.varphi_m, out.vartheta_m)

            if comb_on:
                comb, cang = combined_step(comb, sample, phi_r, ccfg, lp)
                comb_out[k] = (cang.phi, cang.theta, cang.psi_g)
    except DegenerateOrientation as exc:
        raise SingularityAbort(f"navigation output degenerate at t={t[k]:.2f} s: {exc}") from exc

    cols["phi_g"], cols["theta_g"], cols["psi_g"] = est.T
    for name in YaeDiagnostics.FIELDS:
        for i, ax in enumerate("xyz"):
            cols[f"{name}_{ax}"] = diag[name][:, i]
    for i, ax in enumerate("xyz"):
        cols[f"omega_0_{ax}"] = omega_0[:, i]
    cols["phi_gr"], cols["psi_m"], cols["varphi_m"], cols["vartheta_m"] = nav.T
    if comb_on:
        cols["comb_phi_g"], cols["comb_theta_g"], cols["comb_psi_g"] = comb_out.T

    m = t >= t[0] + cfg.transient
    if m.sum() < 2:
        raise ConfigInvalid("transient leaves no rows to evaluate")
    true_phi = np.asarray(true_g.phi)
    e_phi_gr = wrap_angle(nav[:, 0] - true_phi)

    fig7 = check_fig7_consistency(cols, cfg.transient)
    try:
        eq9 = check_eq9_consistency(cols, p.L)
    except TooFewSamples:
        eq9 = float("nan")

    tail = t >= t[-1] - 0.1 * (t[-1] - t[0])
    injected = np.degrees(np.asarray(cfg.imu_error.gyro_bias, dtype=float))
    final = np.degrees(omega_0[-1])
    tail_mean = np.degrees(omega_0[tail].mean(axis=0))

    combined_rms = combined_psi = None
    if comb_on:
        ce = wrap_angle(comb_out - np.stack([true_phi, true_g.theta, true_g.psi_g], axis=1))
        combined_rms = [_rms_deg(ce[m, i]) for i in range(3)]
        cw = gravity_to_wind(GravityAngles(comb_out[m, 0], comb_out[m, 1], comb_out[m, 2]))
        combined_psi = _rms_deg(wrap_angle(cw.psi - true_psi[m]))

    report = RunReport(
        duration=cfg.duration,
        transient=cfg.transient,
        rows=n,
        rms_phi_g_deg=_rms_deg(wrap_angle(est[m, 0] - true_phi[m])),
        rms_theta_g_deg=_rms_deg(est[m, 1] - np.asarray(true_g.theta)[m]),
        rms_psi_g_deg=_rms_deg(wrap_angle(est[m, 2] - np.asarray(true_g.psi_g)[m])),
        rms_phi_gr_deg=_rms_deg(e_phi_gr[m]),
        rms_psi_m_deg=_rms_deg(wrap_angle(nav[m, 1] - true_psi[m])),
        max_abs_phi_gr_error_deg=float(np.degrees(np.max(np.abs(e_phi_gr)))),
        fig7_rms_phi_deg=fig7[0],
        fig7_rms_theta_deg=fig7[1],
        eq9_correlation=eq9,
        bias_injected_deg_s=injected.tolist(),
        bias_final_deg_s=final.tolist(),
        bias_tail_mean_deg_s=tail_mean.tolist(),
        bias_final_error_deg_s=(final - injected).tolist(),
        bias_tail_mean_error_deg_s=(tail_mean - injected).tolist(),
        combined_rms_deg=combined_rms,
        combined_rms_psi_deg=combined_psi,
        runtime_s=time.perf_counter() - t0,
    )
    return RunResult(cols, report)


def write_outputs(result: RunResult, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "run.csv"
    report_path = out / "report.json"
    write_csv(result.columns, csv_path)
    report_path.write_text(json.dumps(result.report.to_dict(), indent=2) + "\n")
    return csv_path, report_path
