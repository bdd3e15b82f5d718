# Simulation module for the threat-aware dodging stack
# Ground-truth world, trials, Monte-Carlo sweeps and calibration
