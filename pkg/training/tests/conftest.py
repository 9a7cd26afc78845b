import numpy as np
import pytest
from inctpv import (
    GaussianBlurOperator,
    IncrementalConfig,
    NoiseModel,
    StackedOperator,
    corrupt,
    estimate_operator_norm,
    export_training_pairs,
    generate_batch,
    inc_tpv,
)

SIDE = 64
SCALE = 255.0
TRAIN_COUNT = 20
HELD_COUNT = 5


@pytest.fixture(scope="session")
def blur_setup():
    K = GaussianBlurOperator(SIDE)
    return K, estimate_operator_norm(StackedOperator(K))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, blur_setup):
    """Deblurring training pairs at 64x64: 20 exported samples with ground
    truth and two incremental snapshots each, plus 5 held-out samples kept
    in memory as (ground truth, blurred observation) pairs."""
    K, op_norm = blur_setup
    phantoms = generate_batch(TRAIN_COUNT + HELD_COUNT, side=SIDE, seed=31)
    inc = IncrementalConfig(scheduler=(50, 50), alpha_p=0.5, lambda0=0.5)
    out = tmp_path_factory.mktemp("pairs")
    items, held = [], []
    for i, gt in enumerate(phantoms):
        y = corrupt(gt, K, NoiseModel(nu=0.02, seed=4000 + i))
        if i < TRAIN_COUNT:
            _, trace = inc_tpv(K, SCALE * y, SCALE * y, inc, op_norm=op_norm,
                               keep_snapshots=True)
            snaps = [np.clip(s / SCALE, 0.0, 1.0) for s in trace.snapshots[1:]]
            items.append({"start": y, "gt": gt, "snapshots": snaps})
        else:
            held.append({"gt": gt, "y": y})
    export_training_pairs(items, str(out), mode="both", H=2)
    return str(out), held
