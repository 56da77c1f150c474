"""
Module attacks - FGSM, BIM and Carlini-Wagner L2 against one attacked model.

Features:
- Gradient-sign attacks with eps-ball projection
- CW L2 with tanh box constraint and per-instance binary search on c
- Clip + 256-level quantization of every perturbed image
- Adversarial set persistence, transfer statistics, example image grid
"""

from .carlini import CWResult, cw_l2
from .gradient import bim, fgsm
from .grid import save_grid, select_examples
from .postprocess import postprocess, project_linf
from .schemas import ATTACK_ORDER, AttackConfig, AttackKind, AttackStats, AttackSuiteConfig, CWParams
from .service import AdversarialSet, attack_population, attack_report, run_attack, transfer_eval
from .storage import load_adversarial_set, save_adversarial_set

__all__ = [
    "ATTACK_ORDER",
    "AdversarialSet",
    "AttackConfig",
    "AttackKind",
    "AttackStats",
    "AttackSuiteConfig",
    "CWParams",
    "CWResult",
    "attack_population",
    "attack_report",
    "bim",
    "cw_l2",
    "fgsm",
    "load_adversarial_set",
    "postprocess",
    "project_linf",
    "run_attack",
    "save_adversarial_set",
    "save_grid",
    "select_examples",
    "transfer_eval",
]
