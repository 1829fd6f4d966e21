"""Утилиты проекта dAUTOMAP: логирование, RNG-потоки, экспорт изображений."""
