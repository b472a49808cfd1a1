"""Numerical defaults and the settings instance they are read from."""

import logging
import math
import os
from typing import Literal

from .config_manager import ConfigManager

log = logging.getLogger(__name__)

APP_NAME: Literal["weyl-gauge"] = "weyl-gauge"
CONFIG_DIR: str = os.path.expanduser("~/.config/weyl-gauge")
CONFIG_FILENAME: Literal["settings.ini"] = "settings.ini"
CONFIG_FILE_PATH: str = os.environ.get(
    "WEYLGAUGE_SETTINGS", os.path.join(CONFIG_DIR, CONFIG_FILENAME)
)
LOG_FILENAME: Literal["weylgauge.log"] = "weylgauge.log"

TWO_PI = 2.0 * math.pi

DEFAULT_SETTINGS = {
    "Geometry": {
        "metric_step": "1e-5",
        "metric_second_step": "1e-4",
        "symmetry_tolerance": "1e-12",
        "degenerate_tolerance": "1e-14",
    },
    "Extremal": {
        "max_iterations": "100",
        "residual_tolerance": "1e-10",
        "jacobian_step": "1e-7",
        "backtrack_factor": "0.5",
        "max_backtracks": "30",
    },
    "Gauge": {
        "phase_tolerance": "1e-6",
        "gradient_step": "1e-5",
        "monotonic_tolerance": "1e-12",
        "endpoint_tolerance": "1e-12",
    },
    "Interference": {
        "screen_samples": "2048",
        "screen_fringes": "4",
        "bins_per_fringe": "50",
        "mc_tolerance": "0.15",
        "mc_chunk_size": "8192",
        "workers": "4",
    },
    "Propagator": {
        "xi_step": "1e-3",
        "tail_tolerance": "1e-10",
        "panel_nodes": "16",
        "kernel_nodes": "96",
        "eta_ratio": "0.1",
        "alias_tolerance": "1e-10",
    },
    "Output": {
        "float_format": ".17g",
    },
}

config: ConfigManager

METRIC_STEP: float
METRIC_SECOND_STEP: float
SYMMETRY_TOLERANCE: float
DEGENERATE_TOLERANCE: float
EXTREMAL_MAX_ITERATIONS: int
EXTREMAL_RESIDUAL_TOLERANCE: float
JACOBIAN_STEP: float
BACKTRACK_FACTOR: float
MAX_BACKTRACKS: int
PHASE_TOLERANCE: float
GRADIENT_STEP: float
MONOTONIC_TOLERANCE: float
ENDPOINT_TOLERANCE: float
SCREEN_SAMPLES: int
SCREEN_FRINGES: int
BINS_PER_FRINGE: int
MC_TOLERANCE: float
MC_CHUNK_SIZE: int
WORKERS: int
XI_STEP: float
TAIL_TOLERANCE: float
PANEL_NODES: int
KERNEL_NODES: int
ETA_RATIO: float
ALIAS_TOLERANCE: float
FLOAT_FORMAT: str


def load_settings(path: str = CONFIG_FILE_PATH, create_missing: bool = False) -> ConfigManager:
    """(Re)read the settings file and rebind the derived constants.

    Library functions read these names at call time, so a reload takes
    effect for every later call.
    """
    global config
    global METRIC_STEP, METRIC_SECOND_STEP, SYMMETRY_TOLERANCE, DEGENERATE_TOLERANCE
    global EXTREMAL_MAX_ITERATIONS, EXTREMAL_RESIDUAL_TOLERANCE, JACOBIAN_STEP
    global BACKTRACK_FACTOR, MAX_BACKTRACKS
    global PHASE_TOLERANCE, GRADIENT_STEP, MONOTONIC_TOLERANCE, ENDPOINT_TOLERANCE
    global SCREEN_SAMPLES, SCREEN_FRINGES, BINS_PER_FRINGE, MC_TOLERANCE
    global MC_CHUNK_SIZE, WORKERS
    global XI_STEP, TAIL_TOLERANCE, PANEL_NODES, KERNEL_NODES, ETA_RATIO
    global ALIAS_TOLERANCE, FLOAT_FORMAT

    config = ConfigManager(path, DEFAULT_SETTINGS, create_missing=create_missing)

    METRIC_STEP = config.getfloat("Geometry", "metric_step", fallback=1e-5)
    METRIC_SECOND_STEP = config.getfloat("Geometry", "metric_second_step", fallback=1e-4)
    SYMMETRY_TOLERANCE = config.getfloat("Geometry", "symmetry_tolerance", fallback=1e-12)
    DEGENERATE_TOLERANCE = config.getfloat(
        "Geometry", "degenerate_tolerance", fallback=1e-14
    )

    EXTREMAL_MAX_ITERATIONS = config.getint("Extremal", "max_iterations", fallback=100)
    EXTREMAL_RESIDUAL_TOLERANCE = config.getfloat(
        "Extremal", "residual_tolerance", fallback=1e-10
    )
    JACOBIAN_STEP = config.getfloat("Extremal", "jacobian_step", fallback=1e-7)
    BACKTRACK_FACTOR = config.getfloat("Extremal", "backtrack_factor", fallback=0.5)
    MAX_BACKTRACKS = config.getint("Extremal", "max_backtracks", fallback=30)

    PHASE_TOLERANCE = config.getfloat("Gauge", "phase_tolerance", fallback=1e-6)
    GRADIENT_STEP = config.getfloat("Gauge", "gradient_step", fallback=1e-5)
    MONOTONIC_TOLERANCE = config.getfloat("Gauge", "monotonic_tolerance", fallback=1e-12)
    ENDPOINT_TOLERANCE = config.getfloat("Gauge", "endpoint_tolerance", fallback=1e-12)

    SCREEN_SAMPLES = config.getint("Interference", "screen_samples", fallback=2048)
    SCREEN_FRINGES = config.getint("Interference", "screen_fringes", fallback=4)
    BINS_PER_FRINGE = config.getint("Interference", "bins_per_fringe", fallback=50)
    MC_TOLERANCE = config.getfloat("Interference", "mc_tolerance", fallback=0.15)
    MC_CHUNK_SIZE = config.getint("Interference", "mc_chunk_size", fallback=8192)
    WORKERS = config.getint("Interference", "workers", fallback=4)

    XI_STEP = config.getfloat("Propagator", "xi_step", fallback=1e-3)
    TAIL_TOLERANCE = config.getfloat("Propagator", "tail_tolerance", fallback=1e-10)
    PANEL_NODES = config.getint("Propagator", "panel_nodes", fallback=16)
    KERNEL_NODES = config.getint("Propagator", "kernel_nodes", fallback=96)
    ETA_RATIO = config.getfloat("Propagator", "eta_ratio", fallback=0.1)
    ALIAS_TOLERANCE = config.getfloat("Propagator", "alias_tolerance", fallback=1e-10)

    FLOAT_FORMAT = config.get("Output", "float_format", fallback=".17g")

    if config.load_error_message:
        log.warning(config.load_error_message)
    return config


load_settings()
