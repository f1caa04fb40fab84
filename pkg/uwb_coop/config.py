"""Default constants: ranging noise, layouts, solver, controller and tracker parameters."""

import os

# --- Package paths ---
PACKAGE_DIR = os.path.dirname(os.path.abspath(__file__))
CONFIGS_DIR = os.path.normpath(os.path.join(PACKAGE_DIR, os.pardir, "configs"))

# --- Ranging ---
SIGMA_UWB = 0.10  # m
CYCLE_RATE = 10.0  # full sweeps per second
OUTLIER_SCALE = 0.5  # m, mean NLOS bias when the outlier mixture is enabled

# --- Anchor geometry ---
SEPARATIONS = (0.6, 1.2, 3.0, 4.0, 12.0, 16.0)  # small UGV, large UGV, tripods
RESPONDER_HEIGHT = 0.0
MAX_OFFSET_NORM = 2.0  # m, sanity bound for initiator lever arms
SINGLE_INITIATOR_OFFSETS = ((0.0, 0.0, 0.0),)
TWO_INITIATOR_OFFSETS = ((0.2, 0.0, 0.0), (-0.2, 0.0, 0.0))

# --- Flights ---
VERTICAL_ALTITUDE = 30.0
SQUARE_SIDE = 8.0
SQUARE_ALTITUDES = (5.0, 10.0, 20.0)
FLIGHT_SPEED = 1.0  # m/s
CRUISE_DWELL = 2.0  # s hover at the top of the climb before the square

# --- Controller and plant ---
KP = 1.0  # 1/s
MAX_SPEED = 2.0  # m/s
TAU = 0.3  # s, first-order velocity lag
CONTROL_RATE = 10.0  # Hz
MAX_FAILED_SOLVES = 10

# --- Solver ---
MAX_ITERATIONS = 50
GRADIENT_TOLERANCE = 1e-9
STEP_TOLERANCE = 1e-10
DAMPING_INIT = 1e-3
Z_FLOOR = 0.0
INITIAL_LIFT = 1.0  # m above the responder centroid for the first solve

# --- Ground-truth tracker ---
FRAME_RATE = 10.0  # Hz
K_NEIGHBORS = 30
MAX_RADIUS = 1.0  # m

# --- Reports ---
ERROR_THRESHOLDS = (0.1, 0.5, 1.0)  # m, fraction_above() values in reports
FEEDBACK_SOURCES = ("truth", "uwb")
