# Trajectory module for the threat-aware dodging stack
# Minimum-jerk piecewise polynomial trajectories
