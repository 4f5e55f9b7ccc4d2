"""Published reference values used as test and report oracles"""
