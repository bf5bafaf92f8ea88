"""Exception hierarchy shared by the geometry, controller and simulation layers."""


class GuidanceError(Exception):
    """Base class for every domain error raised by this package."""


class PathError(GuidanceError, ValueError):
    """Invalid path construction input (degenerate segments, bad points...)."""


class ProjectionError(GuidanceError):
    """A pose could not be projected onto the reference path."""


class SingularityError(GuidanceError):
    """A control or kinematic expression is evaluated at a singular point."""

    kind = "singularity"


class InfeasibleOffset(SingularityError):
    """The tool offset exceeds the local radius of curvature (hypothesis H5)."""

    kind = "infeasible_offset"


class OsculatingCenterSingularity(SingularityError):
    """The rear-axle point sits on the center of the osculating circle (y = 1/c)."""

    kind = "osculating_center"


class TurningRadiusSingularity(SingularityError):
    """The lateral tool offset equals the vehicle turning radius (1 - gamma*T_y = 0)."""

    kind = "turning_radius"


class AttitudeOutOfRange(SingularityError):
    """|theta_tilde| >= pi/2: the spatial reformulation of the kinematics is void."""

    kind = "attitude_out_of_range"


class ConfigError(GuidanceError, ValueError):
    """Invalid run configuration."""
