import pytest

from fgat.diffcore import Adam
from fgat.featio import gen_synthetic
from fgat.model import ModelConfig, init_model


@pytest.fixture
def tiny_setup():
    """Small model + clustered samples for fast end-to-end harness tests."""

    def make(num_classes=4, per_class=6, seed=0, pool="wmean", heads=1, channels=3):
        samples = gen_synthetic(num_classes, per_class, [(2, 3, 3)], 3.0, seed=seed)
        config = ModelConfig(
            in_dim=4,
            num_classes=num_classes,
            grid=(3, 3),
            heads=heads,
            channels=channels,
            pool=pool,
            classifier_hidden=5,
            k=3,
        )
        state = init_model(config, seed)
        optimizer = Adam(state.parameters(), lr=1e-3)
        return samples, config, state, optimizer

    return make


def clone_state(state):
    """Fresh state with identical values and gradient tracking."""
    from fgat.model import init_model as _init

    twin = _init(state.config, 0)
    for p, q in zip(state.parameters(), twin.parameters()):
        q.data[...] = p.data
    return twin


def sample_subset(samples, classes):
    members = set(classes)
    return [s for s in samples if s.label in members]
