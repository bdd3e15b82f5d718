# Uncertainty module for the threat-aware dodging stack
# Envelope radius, survival windows and the surviving-trajectory set
