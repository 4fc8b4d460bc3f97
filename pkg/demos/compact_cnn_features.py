"""
Training the compact CNN and looking inside it
==============================================

Train a reduced-width network on three synthetic subjects, test it on a
fourth, then inspect what it learned: the spectra of the temporal kernels
and a t-SNE map of the flattened last-block activations.
"""
import numpy as np

from ssvepnet import analysis as A
from ssvepnet.nnet.model import ModelConfig
from ssvepnet.nnet.train import TrainConfig, train
from ssvepnet.pipeline import synthesize_preprocessed
from ssvepnet.synthgen import SynthConfig

ds = synthesize_preprocessed(SynthConfig(subjects=4, trials_per_class=2, snr_db=5.0))
tr = ds.subset(np.flatnonzero(ds.subject < 3))
te = ds.subset(np.flatnonzero(ds.subject == 3))

result = train(ModelConfig(F1=16, F2=16), tr.data, tr.class_id,
               TrainConfig(epochs=15, batch_size=32, seed=0),
               callback=lambda e, loss: print(f"epoch {e + 1:2d}  loss {loss:.4f}"))
pred, _ = result.model.predict(te.data)
print(f"held-out accuracy: {np.mean(pred == te.class_id):.3f}")

# %%
# Where do the temporal kernels put their power?
freqs, power = A.model_kernel_spectra(result.model)
peaks = freqs[np.argmax(power[:, 1:], axis=1) + 1]
print("kernel peak frequencies (Hz):", peaks)
share = A.band_concentration(freqs, power, ds.stimulus.frequencies)
print("share of 9-30 Hz power near a stimulus frequency:", np.round(share, 2))

# %%
# t-SNE of layer 3 on the held-out subject, scored by k-means.
emb = A.tsne(A.extract_activations(result.model, te.data, 3), seed=0)
labels = A.kmeans(emb.points, 12)
print(f"t-SNE final KL {emb.kl_divergence:.3f}; "
      f"cluster/class agreement {A.matched_agreement(te.class_id, labels):.3f}")
