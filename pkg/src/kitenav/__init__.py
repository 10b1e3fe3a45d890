"""Attitude estimation and closed-loop simulation for tethered kites."""

from .dynamics import (
    FigureEightConfig,
    KiteState,
    ModelParams,
    PoleSingularity,
    figure_eight_steer,
    pose_trajectory,
    simulate,
    state_derivative,
    step_rk4,
)
from .geometry import (
    DegenerateOrientation,
    GravityAngles,
    NonPositiveLength,
    WindAngles,
    gravity_angles_from_rotation,
    gravity_to_wind,
    position_from_gravity_angles,
    position_from_wind_angles,
    quaternion_integrate,
    rotation_from_gravity_angles,
    rotation_from_wind_angles,
    wrap_angle,
)
from .harness import (
    ConfigInvalid,
    RunReport,
    ScenarioConfig,
    SingularityAbort,
    check_eq9_consistency,
    check_fig7_consistency,
    run_scenario,
)
from .sensors import (
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
    NavOutput,
    WindRefConfig,
    WindRefState,
    combined_init,
    combined_step,
    compute_nav_output,
    compute_phi_r,
    reference_step,
)
from .yae import (
    YaeConfig,
    YaeDiagnostics,
    YaeState,
    butterworth2_design,
    estimate_gravity_direction,
    yae_init,
    yae_step,
)

__version__ = "0.1.0"

__all__ = [
    "CombinedConfig",
    "ConfigInvalid",
    "DegenerateOrientation",
    "FigureEightConfig",
    "GravityAngles",
    "ImuErrorModel",
    "ImuSample",
    "KiteState",
    "ModelParams",
    "NavOutput",
    "NonPositiveLength",
    "PoleSingularity",
    "RunReport",
    "ScenarioConfig",
    "ShipWind",
    "SingularityAbort",
    "TowpointDisturbance",
    "WindAngles",
    "WindRefConfig",
    "WindRefState",
    "YaeConfig",
    "YaeDiagnostics",
    "YaeState",
    "butterworth2_design",
    "check_eq9_consistency",
    "check_fig7_consistency",
    "combined_init",
    "combined_step",
    "compute_nav_output",
    "compute_phi_r",
    "decimate_20",
    "estimate_gravity_direction",
    "figure_eight_steer",
    "gravity_angles_from_rotation",
    "gravity_to_wind",
    "pose_trajectory",
    "position_from_gravity_angles",
    "position_from_wind_angles",
    "quaternion_integrate",
    "reference_step",
    "rotation_from_gravity_angles",
    "rotation_from_wind_angles",
    "run_scenario",
    "simulate",
    "state_derivative",
    "step_rk4",
    "synthesize_airspeed",
    "synthesize_imu_200hz",
    "synthesize_towpoint",
    "wrap_angle",
    "yae_init",
    "yae_step",
]
