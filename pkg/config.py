import os
from dotenv import load_dotenv

load_dotenv()

# Konfigurasi Measure
DEDUP_TOL = float(os.getenv('DEDUP_TOL', '1e-12'))
TOL_PROB = float(os.getenv('TOL_PROB', '1e-9'))
EPS_SING_FACTOR = float(os.getenv('EPS_SING_FACTOR', '1e-3'))
ATOM_MATCH_TOL = float(os.getenv('ATOM_MATCH_TOL', '1e-9'))

# Konfigurasi Transform
TOL_REC = float(os.getenv('TOL_REC', '1e-3'))
REC_MAGNITUDE_DECADES = tuple(int(v) for v in os.getenv('REC_MAGNITUDE_DECADES', '1,6').split(','))
REC_POINTS_PER_DECADE = int(os.getenv('REC_POINTS_PER_DECADE', '8'))
GROWTH_SAMPLES = int(os.getenv('GROWTH_SAMPLES', '10000'))
UPPER_REC_TRIALS = int(os.getenv('UPPER_REC_TRIALS', '32'))

# Konfigurasi Compactification
MAG_MIN = float(os.getenv('MAG_MIN', '1e3'))
TOL_EQUIV = float(os.getenv('TOL_EQUIV', '5e-2'))
WITNESS_CAPACITY = int(os.getenv('WITNESS_CAPACITY', '64'))
MAX_GENERATORS = int(os.getenv('MAX_GENERATORS', '16'))
NORMALIZATION_SAMPLES = int(os.getenv('NORMALIZATION_SAMPLES', '10000'))

# Konfigurasi Young measure
R_CUT = float(os.getenv('R_CUT', str(MAG_MIN)))
OSC_BINS_1D = int(os.getenv('OSC_BINS_1D', '64'))
OSC_BINS_2D = int(os.getenv('OSC_BINS_2D', '32'))
OSC_BINS_ND = int(os.getenv('OSC_BINS_ND', '8'))
TOL_EI = float(os.getenv('TOL_EI', '0.05'))

# Konfigurasi Transport
LP_MAX_POINTS = int(os.getenv('LP_MAX_POINTS', '512'))
LP_METRIC_TOL = float(os.getenv('LP_METRIC_TOL', '1e-9'))

# Konfigurasi Convexity
ENVELOPE_NODES = int(os.getenv('ENVELOPE_NODES', '33'))
ENVELOPE_MAX_ITERS = int(os.getenv('ENVELOPE_MAX_ITERS', '64'))
ENVELOPE_TOL_FACTOR = float(os.getenv('ENVELOPE_TOL_FACTOR', '1e-4'))
ENVELOPE_CLAMP_WARN = float(os.getenv('ENVELOPE_CLAMP_WARN', '0.2'))
POW3_MAX_EXPONENT = int(os.getenv('POW3_MAX_EXPONENT', '32'))
TOL_JENSEN = float(os.getenv('TOL_JENSEN', '1e-9'))

# Konfigurasi Scenario
TOL_SCN = float(os.getenv('TOL_SCN', '0.05'))
SCENARIO_RESOLUTION = int(os.getenv('SCENARIO_RESOLUTION', '1024'))
SCENARIO_CELLS = int(os.getenv('SCENARIO_CELLS', '128'))
SEED = int(os.getenv('SEED', '20240517'))
OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'reports')

# Konfigurasi Logging
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('LOG_FILE', 'young_lab.log')
