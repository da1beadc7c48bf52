"""Small builders shared by the test modules."""
import math

from daruma_sim import (
    ChannelState,
    ObjectClass,
    ObjectState,
    Pose2D,
    PredictionSet,
    Traffic,
    Trajectory,
    WorldModel,
)

ROAD = ((-50.0, -10.0), (300.0, -10.0), (300.0, 10.0), (-50.0, 10.0))


def ego(x=0.0, y=0.0, heading=0.0, speed=10.0, dims=(4.0, 2.0)):
    return ObjectState(0, ObjectClass.VEHICLE, Pose2D(x, y, heading), dims,
                       (speed * math.cos(heading), speed * math.sin(heading)))


def obj(oid, x, y, cls=ObjectClass.VEHICLE, dims=(4.0, 2.0), vel=(0.0, 0.0), heading=0.0):
    return ObjectState(oid, cls, Pose2D(x, y, heading), dims, vel)


def world(objects=(), t=0.0, ego_state=None, poly=ROAD, traffic=None):
    return WorldModel(t, ego_state or ego(), tuple(objects), poly, traffic or Traffic())


def straight_plan(v=10.0, t0=0.0, horizon=5.0, dt=0.1, x0=0.0, y0=0.0, heading=0.0, accel=0.0):
    samples = []
    c, s = math.cos(heading), math.sin(heading)
    for k in range(int(round(horizon / dt)) + 1):
        tau = k * dt
        d = v * tau + 0.5 * accel * tau * tau
        samples.append((Pose2D(x0 + c * d, y0 + s * d, heading), max(0.0, v + accel * tau)))
    return Trajectory(t0, dt, tuple(samples))


def state(cid, w, plan, preds=None, **kw):
    return ChannelState(cid, w, preds or PredictionSet(), plan, **kw)


# Expected taxonomy, one tuple per row: id, category, name, criterion, module, sensors, timing
_PERC = "lidar, radar, camera, ultrasonic sensor, microphone"
TABLE_ROWS = [
    ("1", "world model", "wrong ego-vehicle localization", "ground truth", "localization", "GNSS, IMU, lidar, camera", "sporadic, long"),
    ("2", "world model", "wrong map", "ground truth", "map", "HD map files", "long"),
    ("3", "world model", "missed object", "ground truth", "perception", _PERC, "sporadic, long"),
    ("4", "world model", "ghost object", "ground truth", "perception", _PERC, "sporadic, long"),
    ("5", "world model", "wrong object position, orientation, or dimension", "ground truth", "perception", _PERC, "sporadic, long"),
    ("6", "world model", "wrong object classification", "ground truth", "perception", _PERC, "sporadic, long"),
    ("7", "world model", "wrong drivable space identification", "ground truth", "perception", "lidar, radar, camera, ultrasonic sensor", "sporadic, long"),
    ("8", "world model", "wrong object trajectory", "ground truth", "prediction", "-", "future, sporadic"),
    ("9", "traffic rule", "wrong traffic sign, light, lane marking or operator recognition", "traffic rule", "perception", "camera, V2X", "sporadic, long"),
    ("10", "traffic rule", "violation of traffic regulation (e.g. right of way)", "traffic rule", "motion planning", "-", "sporadic, long"),
    ("11", "motion plan", "counter-intuitive motion plan", "human intuition", "motion planning", "-", "future, sporadic"),
    ("12", "motion plan", "indeterminate motion plan", "human intuition", "motion planning", "-", "sporadic"),
    ("13", "motion plan", "unsafe planned trajectory", "human intuition", "motion planning", "-", "sporadic, long"),
    ("14", "ODD", "wrong weather classification", "ground truth", "ODD checker", "rain and light sensor, visibility range sensor", "long"),
    ("15", "ODD", "wrong road classification", "ground truth", "ODD checker", "road surface sensors, GNSS", "long"),
    ("16", "ODD", "wrong traffic classification", "ground truth", "ODD checker", "camera, radar, clock, GNSS, V2X", "long"),
]
