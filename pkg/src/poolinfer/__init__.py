"""Pool inference auditing for count-mean-sketch local differential privacy.

Subpackages:

* :mod:`poolinfer.mechanism` — CMS/HCMS/no-hash/identity obfuscation and the hash family
* :mod:`poolinfer.population` — pools, popularity models, user behavior
* :mod:`poolinfer.attack` — the Bayesian pool inference attack
* :mod:`poolinfer.oracle` — dense reference scorer for verification
* :mod:`poolinfer.estimation` — adversary-side popularity estimation and utility metrics
* :mod:`poolinfer.harness` — game orchestration, metrics, sweeps
* :mod:`poolinfer.io` — configuration, presets, event logs, CSV emission
* :mod:`poolinfer.cli` — command-line interface
"""

__version__ = "0.1.0"
