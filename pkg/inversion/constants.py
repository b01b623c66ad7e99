# Polynomial degree of the coefficient basis
DEFAULT_DEGREE = 6
MAX_TENSOR_ORDER = 2

# Disk quadrature: Gauss-Legendre nodes in r, equispaced nodes in angle
QUADRATURE_RADIAL = 24
QUADRATURE_ANGULAR = 64

# Singular values below KERNEL_THRESHOLD * sigma_max may belong to the numerical kernel
KERNEL_THRESHOLD = 1e-6
# A kernel boundary whose ratio s_i / s_{i+1} falls short of this is reported as ambiguous
MIN_SPECTRAL_GAP = 1e3

# Tikhonov parameter relative to sigma_max^2
DEFAULT_REGULARIZATION = 1e-10

# Rigidity experiment
RIGIDITY_RAYS = 100
CHEBYSHEV_DEGREE = 24
# Rays with fewer recorded samples are skipped by the identity residual
MIN_RAY_SAMPLES = 9
GAUGE_BOUNDARY_TOLERANCE = 1e-10
# Strength of the boundary phase twist used for the negative control
NEGATIVE_TWIST = 0.5
# max |U_A U_B^{-1} - Id| below this counts as zero when measuring fiber constancy
FIBER_FLOOR = 1e-10

# Natural pairs whose image leaves the forward span by more than this
# (relative to the largest image) are not part of the discrete kernel
NATURAL_SPAN_TOLERANCE = 1e-8

# Transport solutions of kernel sources may carry at most this share of
# their norm above fiber degree m - 1
FINITE_DEGREE_TOLERANCE = 1e-6
