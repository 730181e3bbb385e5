LORENTZ_ALIGN_LOG_NAME = "lorentz-align"
LOG_FILE = "lorentz-align.log"
SETTINGS_CONFIG_FILE = "lorentz_align.ini"

LOGGING_SECTION = "LOGGING"
SOLVER_SECTION = "SOLVER"
BENCHMARK_SECTION = "BENCHMARK"

# Minkowski metric signature (-,+,+,+)
METRIC_SIGNATURE = (-1.0, 1.0, 1.0, 1.0)

# LorentzMatrix / RotationMatrix membership thresholds
ETA_DEFECT_TOL = 1e-9
DET_DEFECT_TOL = 1e-9
ORTHOCHRONOUS_SLACK = 1e-12
ROTATION_TOL = 1e-10
UNIT_QUATERNION_TOL = 1e-10

RANK_TOL = 1e-10
ALGEBRA_TOL = 1e-9

# Sanity-case acceptance thresholds
SANITY_BETA = 0.3
SANITY_LIE_MAX_ERROR = 1e-8
SANITY_DIRECT_MAX_ERROR = 1e-6
SANITY_DET_TOL = 1e-13

KB = 1024
