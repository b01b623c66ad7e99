# Integrator defaults
RTOL = 1e-10
ATOL = 1e-10
# Largest step as a fraction of the chart radius (in chart displacement)
MAX_STEP_FRACTION = 0.01
# First trial step as a fraction of the largest step
INITIAL_STEP_FRACTION = 0.1
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# Steps below this (times the chart radius) count as integrator breakdown
MIN_STEP_FRACTION = 1e-14
MAX_STEPS = 200000

# Boundary crossing refinement: |rho| target relative to R^2
ROOT_TOLERANCE = 1e-12
MAX_ROOT_ITERATIONS = 60
# rho below this (relative to R^2) marks a start on the boundary
BOUNDARY_START_TOLERANCE = 1e-10

# Non-trapping guard: T_max = TMAX_FACTOR * chart diameter
TMAX_FACTOR = 50.0

# Fan resolution
FAN_BOUNDARY_POINTS = 64
FAN_ANGLES = 64

# Rays per worker chunk when a thread pool is used
RAY_CHUNK = 512
