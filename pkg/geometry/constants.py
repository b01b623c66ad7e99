# Fraction of the radius by which the chart extends beyond the surface boundary.
DOMAIN_COLLAR = 0.05

# Central-difference steps, as fractions of the chart radius
GRADIENT_STEP = 1e-5
SECOND_DERIVATIVE_STEP = 1e-3

# |v|_g = 1 tolerance for unit tangent inputs
UNIT_TOLERANCE = 1e-8

# Default sampling densities
CURVATURE_GRID_POINTS = 96
BOUNDARY_SAMPLES = 256

SIGMA_KINDS = ('zero', 'constant', 'poincare', 'polynomial')
EFIELD_KINDS = ('zero', 'constant', 'radial', 'polynomial')

# Gauss-Legendre nodes for boundary arc length
ARC_QUADRATURE_NODES = 64
