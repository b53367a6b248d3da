"""Mixed p-spin optimization by incremental message passing driven by the Parisi PDE.

Submodules: mixture, hamiltonian, parisi, dynamics, variational, iamp,
rounding, oracle, config, cli, bench. The package import itself is light so
that the command line can cap thread pools before numpy loads.
"""

__version__ = "0.1.0"

__all__ = [
    "mixture",
    "hamiltonian",
    "parisi",
    "dynamics",
    "variational",
    "iamp",
    "rounding",
    "oracle",
    "config",
    "cli",
    "bench",
]
