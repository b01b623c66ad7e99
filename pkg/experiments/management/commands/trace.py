from experiments.command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Follow one thermostat orbit and dump its samples'
    name = 'trace'
