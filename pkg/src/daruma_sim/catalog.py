"""Output-insufficiency (OI) taxonomy: 16 types in four categories."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import OutOfRange


class OiCategory(str, Enum):
    WORLD_MODEL = "world_model"
    TRAFFIC_RULE = "traffic_rule"
    MOTION_PLAN = "motion_plan"
    ODD = "odd"


class OiCriterion(str, Enum):
    GROUND_TRUTH = "ground_truth"
    HUMAN_INTUITION = "human_intuition"
    TRAFFIC_RULE = "traffic_rule"


class OiTiming(str, Enum):
    SPORADIC = "sporadic"
    LONG = "long"
    FUTURE = "future"


@dataclass(frozen=True)
class OiDescriptor:
    id: int
    category: OiCategory
    name: str
    criterion: OiCriterion
    module: str
    sensors: str
    timing: tuple[OiTiming, ...]  # in catalog order

    @property
    def timing_set(self) -> frozenset[OiTiming]:
        return frozenset(self.timing)


_PERCEPTION_SENSORS = "lidar, radar, camera, ultrasonic sensor, microphone"

_WM, _TR, _MP, _ODD = OiCategory.WORLD_MODEL, OiCategory.TRAFFIC_RULE, OiCategory.MOTION_PLAN, OiCategory.ODD
_GT, _HI, _RULE = OiCriterion.GROUND_TRUTH, OiCriterion.HUMAN_INTUITION, OiCriterion.TRAFFIC_RULE
_S, _L, _F = OiTiming.SPORADIC, OiTiming.LONG, OiTiming.FUTURE

_ROWS = (
    (1, _WM, "wrong ego-vehicle localization", _GT, "localization", "GNSS, IMU, lidar, camera", (_S, _L)),
    (2, _WM, "wrong map", _GT, "map", "HD map files", (_L,)),
    (3, _WM, "missed object", _GT, "perception", _PERCEPTION_SENSORS, (_S, _L)),
    (4, _WM, "ghost object", _GT, "perception", _PERCEPTION_SENSORS, (_S, _L)),
    (5, _WM, "wrong object position, orientation, or dimension", _GT, "perception", _PERCEPTION_SENSORS, (_S, _L)),
    (6, _WM, "wrong object classification", _GT, "perception", _PERCEPTION_SENSORS, (_S, _L)),
    (7, _WM, "wrong drivable space identification", _GT, "perception", "lidar, radar, camera, ultrasonic sensor", (_S, _L)),
    (8, _WM, "wrong object trajectory", _GT, "prediction", "-", (_F, _S)),
    (9, _TR, "wrong traffic sign, light, lane marking or operator recognition", _RULE, "perception", "camera, V2X", (_S, _L)),
    (10, _TR, "violation of traffic regulation (e.g. right of way)", _RULE, "motion planning", "-", (_S, _L)),
    (11, _MP, "counter-intuitive motion plan", _HI, "motion planning", "-", (_F, _S)),
    (12, _MP, "indeterminate motion plan", _HI, "motion planning", "-", (_S,)),
    (13, _MP, "unsafe planned trajectory", _HI, "motion planning", "-", (_S, _L)),
    (14, _ODD, "wrong weather classification", _GT, "ODD checker", "rain and light sensor, visibility range sensor", (_L,)),
    (15, _ODD, "wrong road classification", _GT, "ODD checker", "road surface sensors, GNSS", (_L,)),
    (16, _ODD, "wrong traffic classification", _GT, "ODD checker", "camera, radar, clock, GNSS, V2X", (_L,)),
)

CATALOG: tuple[OiDescriptor, ...] = tuple(OiDescriptor(*row) for row in _ROWS)
OI_IDS = tuple(range(1, 17))


def oi_catalog(oi_id: int) -> OiDescriptor:
    if isinstance(oi_id, bool) or not isinstance(oi_id, int) or not 1 <= oi_id <= 16:
        raise OutOfRange(f"OI id must be in 1..16, got {oi_id!r}")
    return CATALOG[oi_id - 1]


_CATEGORY_LABELS = {_WM: "world model", _TR: "traffic rule", _MP: "motion plan", _ODD: "ODD"}


def format_catalog() -> str:
    """Tab-separated rendering of the taxonomy, one row per OI."""
    lines = ["ID\tcategory\tname\tcriterion\tADS module\tsensors\ttiming"]
    for d in CATALOG:
        lines.append(
            "\t".join(
                [
                    str(d.id),
                    _CATEGORY_LABELS[d.category],
                    d.name,
                    d.criterion.value.replace("_", " "),
                    d.module,
                    d.sensors,
                    ", ".join(t.value for t in d.timing),
                ]
            )
        )
    return "\n".join(lines) + "\n"
