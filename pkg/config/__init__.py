# Configuration module for threat-aware dodging scenarios
# Scenario models, TOML loading and the bundled default scenario
