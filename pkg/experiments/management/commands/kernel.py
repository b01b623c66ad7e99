from experiments.command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Assemble the forward map, compare its kernel with the natural kernel and reconstruct'
    name = 'kernel'
