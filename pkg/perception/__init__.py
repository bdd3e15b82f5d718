# Perception module for the threat-aware dodging stack
# Camera geometry, wrist-pose release prediction and synthetic arm motion
