# Planner module for the threat-aware dodging stack
# Cost terms, trajectory optimization and the replanning cycle
