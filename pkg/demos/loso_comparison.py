"""
Leave-one-subject-out comparison
================================

Every subject is held out once. CCA uses no training data, Combined-CCA
builds prototypes from the remaining subjects and the CNN is trained from
scratch on them. The run is kept small here; the ``ssvep evaluate``
command runs the same harness on a dataset file.
"""
from ssvepnet.harness import HarnessConfig, compare_reports, run_loso
from ssvepnet.nnet.model import ModelConfig
from ssvepnet.nnet.train import TrainConfig
from ssvepnet.pipeline import synthesize_preprocessed
from ssvepnet.synthgen import SynthConfig

ds = synthesize_preprocessed(SynthConfig(subjects=4, trials_per_class=1, snr_db=0.0))
cfg = HarnessConfig(model=ModelConfig(F1=16, F2=16), train=TrainConfig(epochs=40, batch_size=32))
reports = run_loso(ds, cfg, progress=lambda m, f: print(f"{m:>13} subject {f.test_subject}: {f.accuracy:.3f}"))

table = compare_reports(reports)
print()
print(table.to_text())
