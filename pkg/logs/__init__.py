# Logging module for the threat-aware dodging stack
# Channel loggers and structured JSON log files
