import numpy as np
from hypothesis import settings, strategies as st

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
angle_vec = st.tuples(*[st.floats(-3.0, 3.0)] * 3).map(np.array)


@st.composite
def unit_quats(draw):
    v = np.array(draw(st.tuples(*[st.floats(-1.0, 1.0)] * 4)))
    if np.linalg.norm(v) < 1e-3:
        v = np.array([0.0, 0.0, 0.0, 1.0])
    return v / np.linalg.norm(v)


def random_rotations(rng, n):
    from mekfkit.attitude import quat_normalize, quat_to_matrix

    return quat_to_matrix(quat_normalize(rng.standard_normal((n, 4))))


# verdict lines from test_acceptance.py, repeated in the terminal summary
ACCEPTANCE_LINES = []


def report(line: str) -> None:
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
