from experiments.command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Exit times and the scattering relation over the incoming fan'
    name = 'scatter'
