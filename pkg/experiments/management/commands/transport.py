from experiments.command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Scattering data C_{A,Phi} of a connection and Higgs field over the fan'
    name = 'transport'
