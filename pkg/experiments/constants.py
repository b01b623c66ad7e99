SCHEMA_VERSION = 1

COMMANDS = ('trace', 'scatter', 'transport', 'transform', 'verify', 'kernel', 'rigidity')

# Blocks each command needs besides scene and discretization
REQUIRED_BLOCKS = {
    'trace': ('trace',),
    'transform': ('transform',),
    'rigidity': ('rigidity',),
}

# Commands that integrate from the boundary and need a strictly convex scene
BOUNDARY_COMMANDS = ('scatter', 'transport', 'transform', 'kernel', 'rigidity')

CSV_FLOAT_FORMAT = '%.17g'

# Default rank of the random pair used when the config has no pair block
DEFAULT_RANDOM_RANK = 2

# Kernel command: synthetic truth for the reconstruction check
DEFAULT_NOISE = 0.0
