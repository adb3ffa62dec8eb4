"""Constants shared by the kernel backends."""

LOG2E = 1.4426950408889634

# ErrorToggleConfig flags, packed into one int for the compiled loops
EXACT_QUANT = 1
EXACT_LOG = 2
EXACT_POW2 = 4
EXACT_STORAGE = 8

Q_SCALE = 128.0
Q_RAW_MIN = -32768.0
Q_RAW_MAX = 32767.0
Q_MIN = Q_RAW_MIN / Q_SCALE
Q_MAX = Q_RAW_MAX / Q_SCALE
LUT_SCALE = 16384.0
DELTA_FLOOR = -15.0
SHIFT_LIMIT = 15.0
