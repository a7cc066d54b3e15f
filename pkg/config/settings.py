import os

# -------- Paths --------
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
APP_ROOT = os.path.normpath(os.path.join(BASE_DIR, ".."))

# run artifacts land here unless --out-dir says otherwise
OUT_DIR = os.path.join(APP_ROOT, "runs")
LOG_DIR = os.path.join(APP_ROOT, "logs")

# -------- Graph / Markov chain --------
ROW_SUM_TOL = 1e-12
PERRON_TOL = 1e-10
PERRON_MAX_ITER = 100_000

# -------- Spectral --------
SVD_OVERSAMPLE = 8
SVD_POWER_ITERS = 2
# singular values below this fraction of the largest one are not inverted
SVD_RELATIVE_CUTOFF = 1e-10

# -------- Commute / oracle --------
BACKENDS = ("dilap", "dense_oracle", "ppr")
DEFAULT_BACKEND = "dilap"
DENSE_CAP = 2000        # dense N x N commute matrices only up to this N
ORACLE_CAP = 500        # cubic solves only at validation scale
PPR_GAMMA = 0.85
MC_MAX_STEPS = 1_000_000
MC_BLOCK_SIZE = 8192    # walks simulated together under one derived seed
MC_CONFIDENCE = 0.99

# -------- Model / training (CoraML-shaped defaults) --------
LAYERS = 2
HIDDEN = 64
LEARNING_RATE = 0.01
WEIGHT_DECAY = 0.0
EPOCHS = 200
SEED = 0
RANK_Q = 5
ACTIVATION = "relu"     # "relu" | "identity"
REWIRING = "similarity"  # "similarity" | "symmetric"
# init bound is INIT_GAIN / sqrt(fan_in); sqrt(6) keeps ReLU activations at unit scale
INIT_GAIN = 6 ** 0.5

# -------- Synthetic data --------
SYNTH_DIM = 8
SYNTH_NOISE = 0.3
SPLIT_RATIOS = (0.48, 0.32)  # train / val, the rest is test
