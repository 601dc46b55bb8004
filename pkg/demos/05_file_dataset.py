# Round trip through the long CSV format, then run a small experiment from a
# config that points at the file and thins out half of the classes.
import tempfile
from pathlib import Path

import numpy as np

from ibgan import SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from ibgan.experiment import format_summary, load_config, run_experiment, summarize

work = Path(tempfile.mkdtemp())
spec = SyntheticSpec((80, 80, 80, 80), k=2, m=16, phi=(0.9, 0.5, 0.0, -0.5),
                     mu=[[0, 0], [1, 0], [0, 1], [1, 1]])
ds = generate_synthetic(spec, np.random.default_rng(0))
save_dataset(ds, work / "ar4.csv")
print((work / "ar4.csv").read_text().splitlines()[:3])
back = load_dataset(work / "ar4.csv")
print("bit-exact reload:", np.array_equal(back.X, ds.X))

(work / "run.ini").write_text("""
[experiment]
methods = ibgan, class_weights, upsample, downsample
replicates = 2
output = results.jsonl

[data]
source = file
path = ar4.csv
test_fraction = 0.3
inject_imbalance = true

[train]
epochs = 10
""")
records = run_experiment(load_config(work / "run.ini"))
print(format_summary(summarize(records)))
