from experiments.command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Scattering rigidity checks for a pair and its gauge transform'
    name = 'rigidity'
