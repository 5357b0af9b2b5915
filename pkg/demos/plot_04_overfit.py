"""
Overfitting the shipped suite
=============================

Train the full model on the four bundled 32x32 pairs for a few hundred steps
and watch the pixel loss and PSNR. Pass a step count as the first argument to
shorten the run.
"""

import sys
import numpy as np
from semlle import config, data, training
from semlle.imaging import psnr

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 500
cfg = config.desk_config(max_steps=steps)
suite = data.overfit_suite()
seg, vl = training.make_backends(cfg)


def report(record):
    print("step %4d  pix %.5f  edge %.5f  sem %.5f  mul %+.4f" %
          (record.step, record.pix, record.edge, record.sem, record.mul))


model, records = training.train(cfg, suite, seg_backend=seg, vl_backend=vl,
                                callback=lambda state, r: report(r) if r.step % 50 == 0 else None)

# score the whole training set against the raw dark inputs
rows = training.evaluate(model, suite, seg)
raw = [psnr(*suite.load(i)) for i in range(len(suite))]
print(training.metrics_csv(rows))
print("mean PSNR of the raw inputs %.2f dB, after training %.2f dB" % (np.mean(raw), np.mean([r[1] for r in rows])))
