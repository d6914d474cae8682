"""Closure-certificate verification for discrete-time polynomial systems."""

__version__ = "0.1.0"

from .automaton import BuchiMonitor, Nba, ProductSystem, monitor_buchi
from .certificate import (
    Hyperparameters,
    IccLtl,
    IccPersistence,
    IccSafety,
    cc_safety_residuals,
    ibc_to_icc,
    load_certificate,
    ltl_residuals,
    persistence_residuals,
    residuals_for,
    safety_residuals,
    save_certificate,
)
from .checker import CheckReport, check, check_thm12_gate, falsify
from .config import ProjectConfig, load_config
from .geometry import Box, SemiAlgebraicSet, grid, product_grid
from .poly import DimensionError, Polynomial, parse_polynomial
from .scenario import ScenarioSynthesizer, Template, build_sp, solve, synthesize
from .sos import SosWitness, compile_program, export_sdp, verify_witness
from .system import LabelingMap, System, simulate, step

__all__ = [
    "Box", "BuchiMonitor", "CheckReport", "DimensionError", "Hyperparameters", "IccLtl", "IccPersistence",
    "IccSafety", "LabelingMap", "Nba", "Polynomial", "ProductSystem", "ProjectConfig", "ScenarioSynthesizer",
    "SemiAlgebraicSet", "SosWitness", "System", "Template", "build_sp", "cc_safety_residuals", "check",
    "check_thm12_gate", "compile_program", "export_sdp", "falsify", "grid", "ibc_to_icc", "load_certificate",
    "load_config", "ltl_residuals", "monitor_buchi", "parse_polynomial", "persistence_residuals", "product_grid",
    "residuals_for", "safety_residuals", "save_certificate", "simulate", "solve", "step", "synthesize",
    "verify_witness",
]
