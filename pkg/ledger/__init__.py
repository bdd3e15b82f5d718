# Ledger module for the threat-aware dodging stack
# Atomic artifact writing and metric summaries
