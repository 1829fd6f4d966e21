"""Сервисы проекта dAUTOMAP."""
