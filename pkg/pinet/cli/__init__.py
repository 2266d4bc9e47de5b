"""
Comandos de linha de comando do PINet
"""
