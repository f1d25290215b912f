"""
Joint versus alternating optimization on a toy network
======================================================

Summing a feature loss and a pixel loss can create points where the two
gradients cancel. Alternating between the losses does not stop there.
"""
import numpy as np

from dtdn.analysis import build_toy_instance, classify_solution, find_interference_stationary, run_schedule

inst = build_toy_instance(0)
print(f"{inst.n_params} parameters, planted optimum class {classify_solution(inst, inst.theta_star)}")

res = find_interference_stationary(inst, seed=0, restarts=16, stop_after_found=1)
cert = res.certificate
print(f"joint gradient norm   {cert.joint_grad_norm:.2e}")
print(f"feature-loss gradient {cert.content_grad_norm:.2e}")
print(f"weighted pixel-loss gradient {cert.mse_grad_norm:.2e}")

# the joint schedule is stuck, the alternating one escapes within a few steps
joint = run_schedule(inst, "joint", cert.theta, 100)
alt = run_schedule(inst, "alternating", cert.theta, 10)
print("joint max displacement over 100 steps:      %.2e" % joint.displacement.max())
print("alternating displacement over 10 steps:", np.array2string(alt.displacement, precision=3))
