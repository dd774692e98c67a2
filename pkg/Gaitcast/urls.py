"""
URL configuration for Gaitcast project.

Only the admin is routed; it is used to browse the experiment run history
recorded by the management commands.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
