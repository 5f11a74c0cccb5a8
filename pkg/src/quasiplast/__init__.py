"""Quasistatic small-strain perfect plasticity: solver and verification harness.

Submodules are imported lazily so the CLI can pin the BLAS thread count
before numpy loads (see ``QUASIPLAST_THREADS``).
"""

__version__ = "0.1.0"

_EXPORTS = {
    "SymTensor": "tensors",
    "DevTensor": "tensors",
    "deviator": "tensors",
    "sym_dyad": "tensors",
    "VonMises": "constitutive",
    "Polyhedral": "constitutive",
    "ElasticModuli": "constitutive",
    "Material": "constitutive",
    "support_H": "constitutive",
    "project_K": "constitutive",
    "in_normal_cone": "constitutive",
    "incremental_update": "constitutive",
    "StrainHistory": "material_point",
    "PointRecord": "material_point",
    "run_point": "material_point",
    "energy_residual": "material_point",
    "SampledPath": "paths",
    "total_variation": "paths",
    "H_variation": "paths",
    "check_derivative_formula": "paths",
    "Mesh": "mesh",
    "structured_rectangle": "mesh",
    "add_collar": "mesh",
    "strain": "mesh",
    "Scenario": "scenario",
    "TimeProfile": "scenario",
    "assemble_load": "scenario",
    "check_safe_load": "scenario",
    "load_scenario": "scenario",
    "SolverConfig": "solver",
    "DiscreteTriple": "solver",
    "IncrementalSolver": "solver",
    "solve_increment": "solver",
    "euler_residuals": "solver",
    "TimeGrid": "evolution",
    "EvolutionRecord": "evolution",
    "run_evolution": "evolution",
    "discrete_energy_audit": "evolution",
    "energy_balance_residual": "evolution",
    "convergence_study": "evolution",
    "check_flow_rule": "verification",
    "check_variational_inequality": "verification",
    "check_normality": "verification",
    "averaged_stress": "verification",
    "check_continuous_dependence": "verification",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
