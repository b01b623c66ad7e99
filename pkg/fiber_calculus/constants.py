# Fiber resolution of a grid built without one
DEFAULT_N_THETA = 64

FRAME_CONVENTIONS = ('bracket', 'rotation')
DEFAULT_CONVENTION = 'bracket'

# Test functions are supported in |x| <= SUPPORT_FRACTION * R
SUPPORT_FRACTION = 0.9
CUTOFF_POWER = 8

# Fraction of the total spectral energy allowed in the top fiber modes
BANDWIDTH_TOLERANCE = 1e-10
# Number of top modes inspected for overflow
BANDWIDTH_GUARD_MODES = 2

# Segments per quarter circle of the disk polygon used for cell weights
DISK_QUAD_SEGMENTS = 512

# Identity checks
IDENTITY_TOLERANCE = 1e-5
MIN_CONVERGENCE_ORDER = 2.0
MODE_LEAKAGE_TOLERANCE = 1e-9

# The star-curvature bound is evaluated for k = 1..CONDITION_K_MAX
CONDITION_K_MAX = 8

# Residuals below this are treated as converged regardless of the fitted order
RESIDUAL_FLOOR = 1e-11
CARLEMAN_TOLERANCE = 1e-8

# Coarse-to-reference resolution ladder (n_x, n_theta) of the verification suite
DEFAULT_RESOLUTIONS = ((24, 16), (48, 32), (96, 64))
TEST_FUNCTION_DEGREE = 3
TEST_FUNCTION_BANDWIDTH = 3
