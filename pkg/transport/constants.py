# Largest bundle rank accepted from configs (n^2 <= 16 after pseudolinearization)
MAX_RANK = 4

MATRIX_FIELD_KINDS = ('zero', 'constant', 'linear', 'polynomial', 'bump', 'exp')

# Bump profiles are (1 - |x - c|^2 / w^2)^BUMP_POWER inside the ball
BUMP_POWER = 4

# ||U|| ||W|| above this triggers a ConditioningWarning
CONDITION_WARNING = 1e8

# Q is treated as singular when its condition number exceeds this
SINGULAR_CONDITION = 1e12

# Sample points used to classify a pair as unitary / skew-Hermitian
STRUCTURE_SAMPLES = 64
STRUCTURE_TOLERANCE = 1e-12

# Boundary-vanishing cutoff (R^2 - |x|^2)^CUTOFF_POWER for kernel elements
CUTOFF_POWER = 2
BOUNDARY_TOLERANCE = 1e-10

# Fiber angles used to re-project induced functions onto tensor coefficients
PROJECTION_ANGLES_PER_ORDER = 4

# Fiber modes of a grid source below this share of its energy are not interpolated
MODE_FLOOR = 1e-24
