from django.http import JsonResponse
from rest_framework import status


def create_api_response(status_code, message, data=None):
    """
    Returns a standardized JSON API response.
    """
    response = {
        'status': 'success' if status.is_success(status_code) else 'error',
        'status_code': status_code,
        'message': message,
    }
    if data is not None:
        response['data'] = data
    return JsonResponse(response, status=status_code)


def create_serializer_response(serializer_errors: dict) -> dict:
    """
    Flattens serializer errors into {field: {'error': '...'}}.

    Used for API payloads and for command-line option validation, where the
    same dict is rendered into the CommandError message.
    """
    def replace_blank_error(error_message):
        # blank and null both read as a missing field
        return 'This field is required.' if error_message in ('This field may not be blank.', 'This field may not be null.') else error_message

    errors = {}
    for field, messages in serializer_errors.items():
        if isinstance(messages, dict):
            messages = [f"{key}: {value}" for key, value in messages.items()]
        errors[field] = {'error': ', '.join(map(replace_blank_error, map(str, messages)))}
    return errors


def format_serializer_errors(serializer_errors: dict) -> str:
    """One-line rendering of create_serializer_response output."""
    flattened = create_serializer_response(serializer_errors)
    return '; '.join(f"{field}: {entry['error']}" for field, entry in flattened.items())
