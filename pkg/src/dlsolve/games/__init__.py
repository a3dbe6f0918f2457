from .descriptor import GameDescriptor, build_game, mini_nlfh
from .kuhn import KuhnPoker
from .poker import FlopHoldem, LeducPoker
from .rps import RPSPlus, rps_payoff
from .tree import (CHANCE, P1, P2, TERMINAL, GameError, GameTree, Infoset, Player,
                   TreeBuilder, action_class, build_tree, opponent)
