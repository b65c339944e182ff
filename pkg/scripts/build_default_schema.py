"""Regenerate src/labelforge/data/default_engineered_schema.json.

The permission and tag vocabularies are common Android permissions and
VirusTotal tags, padded with reserved slots to 324 and 32 entries. Edit the
JSON directly (or pass --schema to the CLI) to use a different vocabulary.
"""

import json
from pathlib import Path

from labelforge.features import CORRECT_SCANNERS

N_PERMISSIONS = 324
N_TAGS = 32

ANDROID_PERMISSIONS = """
ACCEPT_HANDOVER ACCESS_BACKGROUND_LOCATION ACCESS_CHECKIN_PROPERTIES ACCESS_COARSE_LOCATION
ACCESS_FINE_LOCATION ACCESS_LOCATION_EXTRA_COMMANDS ACCESS_MEDIA_LOCATION ACCESS_MOCK_LOCATION
ACCESS_NETWORK_STATE ACCESS_NOTIFICATION_POLICY ACCESS_SURFACE_FLINGER ACCESS_WIFI_STATE
ACCOUNT_MANAGER ACTIVITY_RECOGNITION ADD_VOICEMAIL ANSWER_PHONE_CALLS AUTHENTICATE_ACCOUNTS
BATTERY_STATS BIND_ACCESSIBILITY_SERVICE BIND_APPWIDGET BIND_AUTOFILL_SERVICE BIND_CARRIER_SERVICES
BIND_DEVICE_ADMIN BIND_DREAM_SERVICE BIND_INPUT_METHOD BIND_JOB_SERVICE BIND_NFC_SERVICE
BIND_NOTIFICATION_LISTENER_SERVICE BIND_PRINT_SERVICE BIND_QUICK_SETTINGS_TILE BIND_REMOTEVIEWS
BIND_SCREENING_SERVICE BIND_TELECOM_CONNECTION_SERVICE BIND_TEXT_SERVICE BIND_TV_INPUT
BIND_VOICE_INTERACTION BIND_VPN_SERVICE BIND_VR_LISTENER_SERVICE BIND_WALLPAPER BLUETOOTH
BLUETOOTH_ADMIN BLUETOOTH_PRIVILEGED BODY_SENSORS BROADCAST_PACKAGE_REMOVED BROADCAST_SMS
BROADCAST_STICKY BROADCAST_WAP_PUSH CALL_COMPANION_APP CALL_PHONE CALL_PRIVILEGED CAMERA
CAPTURE_AUDIO_OUTPUT CHANGE_COMPONENT_ENABLED_STATE CHANGE_CONFIGURATION CHANGE_NETWORK_STATE
CHANGE_WIFI_MULTICAST_STATE CHANGE_WIFI_STATE CLEAR_APP_CACHE CONTROL_LOCATION_UPDATES
DELETE_CACHE_FILES DELETE_PACKAGES DIAGNOSTIC DISABLE_KEYGUARD DUMP EXPAND_STATUS_BAR
FACTORY_TEST FLASHLIGHT FOREGROUND_SERVICE GET_ACCOUNTS GET_ACCOUNTS_PRIVILEGED GET_PACKAGE_SIZE
GET_TASKS GLOBAL_SEARCH INSTALL_LOCATION_PROVIDER INSTALL_PACKAGES INSTALL_SHORTCUT
INSTANT_APP_FOREGROUND_SERVICE INTERNET KILL_BACKGROUND_PROCESSES LOCATION_HARDWARE
MANAGE_ACCOUNTS MANAGE_DOCUMENTS MANAGE_OWN_CALLS MASTER_CLEAR MEDIA_CONTENT_CONTROL
MODIFY_AUDIO_SETTINGS MODIFY_PHONE_STATE MOUNT_FORMAT_FILESYSTEMS MOUNT_UNMOUNT_FILESYSTEMS
NFC NFC_TRANSACTION_EVENT PACKAGE_USAGE_STATS PERSISTENT_ACTIVITY PROCESS_OUTGOING_CALLS
READ_CALENDAR READ_CALL_LOG READ_CONTACTS READ_EXTERNAL_STORAGE READ_FRAME_BUFFER READ_HISTORY_BOOKMARKS
READ_INPUT_STATE READ_LOGS READ_PHONE_NUMBERS READ_PHONE_STATE READ_PROFILE READ_SETTINGS READ_SMS
READ_SOCIAL_STREAM READ_SYNC_SETTINGS READ_SYNC_STATS READ_USER_DICTIONARY READ_VOICEMAIL REBOOT
RECEIVE_BOOT_COMPLETED RECEIVE_MMS RECEIVE_SMS RECEIVE_WAP_PUSH RECORD_AUDIO REORDER_TASKS
REQUEST_COMPANION_RUN_IN_BACKGROUND REQUEST_COMPANION_USE_DATA_IN_BACKGROUND REQUEST_DELETE_PACKAGES
REQUEST_IGNORE_BATTERY_OPTIMIZATIONS REQUEST_INSTALL_PACKAGES RESTART_PACKAGES SEND_RESPOND_VIA_MESSAGE
SEND_SMS SET_ALARM SET_ALWAYS_FINISH SET_ANIMATION_SCALE SET_DEBUG_APP SET_PREFERRED_APPLICATIONS
SET_PROCESS_LIMIT SET_TIME SET_TIME_ZONE SET_WALLPAPER SET_WALLPAPER_HINTS SIGNAL_PERSISTENT_PROCESSES
STATUS_BAR SUBSCRIBED_FEEDS_READ SUBSCRIBED_FEEDS_WRITE SYSTEM_ALERT_WINDOW TRANSMIT_IR
UNINSTALL_SHORTCUT UPDATE_DEVICE_STATS USE_BIOMETRIC USE_CREDENTIALS USE_FINGERPRINT USE_SIP
VIBRATE WAKE_LOCK WRITE_APN_SETTINGS WRITE_CALENDAR WRITE_CALL_LOG WRITE_CONTACTS
WRITE_EXTERNAL_STORAGE WRITE_GSERVICES WRITE_HISTORY_BOOKMARKS WRITE_PROFILE WRITE_SECURE_SETTINGS
WRITE_SETTINGS WRITE_SMS WRITE_SOCIAL_STREAM WRITE_SYNC_SETTINGS WRITE_USER_DICTIONARY WRITE_VOICEMAIL
""".split()

VT_TAGS = """
apk android checks-gps checks-network-adapters contains-elf contains-pe crypto
detect-debug-environment dyn-calls idle obfuscated reflection runtime-modules sends-sms
telephony clipboard direct-cpu-clock-access long-sleeps calls-wmi persistence
self-delete malware-signed signed invalid-signature
""".split()


def padded(items, size, prefix):
    items = list(dict.fromkeys(items))[:size]
    return items + [f"{prefix}{i:03d}" for i in range(len(items), size)]


def main():
    schema = {
        "kind": "engineered",
        "scanners": list(CORRECT_SCANNERS),
        "permissions": padded(["android.permission." + p for p in ANDROID_PERMISSIONS], N_PERMISSIONS,
                              "reserved.permission.slot_"),
        "tags": padded(VT_TAGS, N_TAGS, "reserved.tag.slot_"),
        "as_of": None,
    }
    out = Path(__file__).resolve().parents[1] / "src" / "labelforge" / "data" / "default_engineered_schema.json"
    out.write_text(json.dumps(schema, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out}: {len(schema['permissions'])} permissions, {len(schema['tags'])} tags")


if __name__ == "__main__":
    main()
