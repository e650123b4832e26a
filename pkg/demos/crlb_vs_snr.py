"""CRLB of every parameter against SNR for the full-scale scene."""

from afdm_isac.channel import default_scene, noise_variance, synthesize_tensor
from afdm_isac.crlb import PARAM_NAMES, compute_crlb
from afdm_isac.waveform import gen_qam_frame

scene, cfg = default_scene()
x = gen_qam_frame(16, 0)
clean = synthesize_tensor(scene, x, cfg)[1]
print("snr_db target " + " ".join(f"{p:>10s}" for p in PARAM_NAMES))
for snr in (0, 10, 20, 30):
    rep = compute_crlb(scene, cfg, x, noise_variance(clean, snr)).as_dict()
    for r in range(len(scene.targets)):
        print(f"{snr:6d} {r + 1:6d} " + " ".join(f"{rep[p][r]:10.3e}" for p in PARAM_NAMES))
