# Data models for the stability laboratory
