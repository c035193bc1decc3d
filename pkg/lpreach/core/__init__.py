"""Core configuration and settings"""


