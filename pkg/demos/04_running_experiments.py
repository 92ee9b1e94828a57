"""Running the registered experiments from Python.

This does the same as `spdemax --experiment NAME --quick`. Each result
holds a list of checks and some tables. The tables are what the command
line writes out as CSV files.
"""

from spdemax.experiments import ExperimentConfig, list_experiments, run_experiment

print(list_experiments())
print()
for name in ("reflection_principle", "gamblers_ruin", "energy_identity"):
    res = run_experiment(ExperimentConfig(name, seed=7, quick=True))
    print(f"{name}: {'pass' if res.passed else 'fail'}")
    for c in res.checks:
        print("  " + c.line())
