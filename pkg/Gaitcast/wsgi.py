"""
WSGI config for Gaitcast project.

It exposes the WSGI callable as a module-level variable named ``application``.
Used by ``runserver`` to serve the admin run-history pages.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Gaitcast.settings')

application = get_wsgi_application()
