from experiments.command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Operator identities, energy identities, Carleman estimate and curvature conditions'
    name = 'verify'
