"""Data models and schemas"""


