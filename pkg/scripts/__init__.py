"""CLI-скрипты dAUTOMAP.

Идея: у каждой операции есть запуск из терминала, который:
- печатает разрешённую конфигурацию перед работой
- пишет пошаговые логи в консоль
- сохраняет артефакты и печатает путь к ним
"""
