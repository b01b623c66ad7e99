from experiments.command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Attenuated ray transform of a tensor source pair over the fan'
    name = 'transform'
