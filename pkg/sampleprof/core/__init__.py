"""The core of sampleprof"""
