"""Optimise a single-qubit Hadamard gate on an isolated qubit.

Starts from a small random field, runs quasi-Newton optimisation and prints
the convergence history together with the pulse energy (fluence).

    python3 demos/closed_gate.py
"""

from robustgates import bfgs_minimize, chain_network, hamiltonian_problem, sample_initial_field, target_gate
from robustgates.controls import total_fluence


def main():
    problem = hamiltonian_problem(chain_network([1.0]), target_gate("hadamard", 1))
    field0 = sample_initial_field(problem.n_controls, n_slices=25, T=5.0, delta=0.1, seed=0)
    record = bfgs_minimize(problem, field0, seed=0)

    print(problem)
    for i, e in enumerate(record.history):
        print(f"iteration {i:3d}  error {e:.3e}")
    print(f"termination: {record.termination}, fidelity {record.final_fidelity:.8f}")
    print(f"fluence: initial {total_fluence(field0):.4f}, final {total_fluence(record.final_field):.4f}")


if __name__ == "__main__":
    main()
