import numpy as np
import pytest

from domainaudit.calibration import calibrate
from domainaudit.classifiers import TrainConfig, fit_density_ratio, train_linear_readout
from domainaudit.labels import DomainLabel
from domainaudit.synth import SynthConfig, gen_two_domain

NAT, AMB, REND = DomainLabel.NATURAL, DomainLabel.AMBIGUOUS, DomainLabel.RENDITION


@pytest.fixture(scope="session")
def synth_corpus():
    """Well-separated three-domain corpus with a train/val row split."""
    cfg = SynthConfig(seed=7, samples_per_cell=250, num_classes=4)
    data = gen_two_domain(cfg)
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(data.ids))
    return data, perm[:1500], perm[1500:2200]


@pytest.fixture(scope="session")
def calibrated_pair(synth_corpus):
    """Natural readout and rendition density-ratio classifiers calibrated at
    98% validation precision."""
    data, train_rows, val_rows = synth_corpus
    x = data.vectors.astype(np.float64)
    d = data.domains
    ft = train_linear_readout(
        x[train_rows], d[train_rows], [NAT, AMB, REND], TrainConfig(seed=3, epochs=50)
    )
    dr = fit_density_ratio(x[train_rows], d[train_rows], REND, TrainConfig(seed=4, epochs=50))
    natural = calibrate(ft, x[val_rows], d[val_rows], NAT, 0.98, "ft")
    rendition = calibrate(dr, x[val_rows], d[val_rows], REND, 0.98, "dr-r")
    return natural, rendition


@pytest.fixture()
def synth_store(tmp_path, synth_corpus):
    data, _, _ = synth_corpus
    path = tmp_path / "corpus.embs"
    data.write(path)
    return path, data
