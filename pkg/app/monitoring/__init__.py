"""
Monitoring package: PSE language, Markov chains, frequentist and Bayesian
monitors, and the experiment harness.
"""

from .bayesian import BayesExpMonitor, BayesMonitor, PriorTheta
from .errors import MonitorError
from .frequentist import BaselineMonitor, FreqMonitor, FreqMonitorDivFree
from .interval import Interval
from .markov import MarkovChain, TransitionMatrix, new_chain, simulate
from .outputs import Estimate, Pending
from .pse import evaluate, parse_pse
from .states import StateSpace

__all__ = [
    "BaselineMonitor",
    "BayesExpMonitor",
    "BayesMonitor",
    "Estimate",
    "FreqMonitor",
    "FreqMonitorDivFree",
    "Interval",
    "MarkovChain",
    "MonitorError",
    "Pending",
    "PriorTheta",
    "StateSpace",
    "TransitionMatrix",
    "evaluate",
    "new_chain",
    "parse_pse",
    "simulate",
]
