"""Bloch-vector trajectories of a qubit coupled to four noise qubits.

Optimises a Hadamard on the system qubit, prints how far each qubit's Bloch
vector moves, and then shows the same field failing once the control also
drives the noise qubits (field leakage).

    python3 demos/noise_qubits.py
"""

import numpy as np

from robustgates.config import build_problem, load_config
from robustgates.controls import sample_initial_field
from robustgates.experiments import bloch_trajectories, leakage_scenario
from robustgates.model import noise_network
from robustgates.objectives import hamiltonian_problem
from robustgates.optimize import bfgs_minimize


def main():
    cfg = load_config("nm-q1n4-hadamard-T25")
    problem = build_problem(cfg)
    field0 = sample_initial_field(problem.n_controls, cfg["K"], cfg["T"], cfg["delta"], seed=1)
    record = bfgs_minimize(problem, field0, seed=1)
    print(f"{problem}\nerror {record.final_error:.2e} after {record.iterations} iterations")

    times, bloch = bloch_trajectories(problem, record.final_field, n_samples=11)
    for t, b in zip(times, bloch):
        norms = " ".join(f"{x:.4f}" for x in np.linalg.norm(b, axis=-1))
        print(f"t = {t:5.1f}  system z {b[0, 2]:+.3f}  |b| per qubit: {norms}")

    spec = noise_network(cfg["system_omega"], cfg["noise_omega"], cfg["system_coupling"], cfg["noise_coupling"])
    leaky = hamiltonian_problem(leakage_scenario(spec), problem.target)
    print(f"same field with leakage onto the noise qubits: error {leaky.error(record.final_field):.2e}")


if __name__ == "__main__":
    main()
