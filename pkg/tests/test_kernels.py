import os
import subprocess
import sys

import numpy as np
import pytest

from discsched import kernels
from discsched.core import horizon_of, simulate, step_uniforms
from discsched.fuzz import random_params, random_schedule
from discsched.policies import GREEDY, PolicyDescriptor, PolicyKind, always_urgent

POLICIES = [GREEDY, always_urgent(), PolicyDescriptor(PolicyKind.IMMEDIACY_BIASED, psi=1.7),
            PolicyDescriptor(PolicyKind.MG, psi=1.3), PolicyDescriptor(PolicyKind.MG)]
BACKENDS = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])


@pytest.mark.parametrize("backend", BACKENDS)
def test_backends_reproduce_reference(backend):
    rng = np.random.default_rng(2)
    for t in range(120):
        sched = random_schedule(rng, integer_fees=bool(t % 2))
        params = random_params(rng, horizon_of(sched))
        u = step_uniforms(t, 8, params.horizon + 1)
        for policy in POLICIES + [PolicyDescriptor(PolicyKind.RMIX, lam=params.lam)]:
            ref = np.array([simulate(policy, sched, params, uniforms=u[s]).revenue for s in range(8)])
            np.testing.assert_array_equal(kernels.simulate_batch(policy, sched, params, u, backend=backend), ref)


def test_shape_check(example_schedule):
    from discsched.core import params_for

    with pytest.raises(ValueError):
        kernels.simulate_batch(GREEDY, example_schedule, params_for(example_schedule, 0.5), np.zeros((2, 2)))


def test_env_flag_selects_numpy():
    code = "import discsched.kernels as k; print(k.backend_name())"
    env = dict(os.environ, DISCSCHED_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
